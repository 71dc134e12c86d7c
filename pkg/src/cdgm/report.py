"""Report emission: aligned text tables, full-precision CSV, and figures.

Every report table is written twice: a human-readable text table with four
significant digits, and a machine-readable CSV companion at full float
precision.  Table kinds with a natural x-y reading (error or F1 series,
power curves) additionally render a matplotlib figure next to the CSV.
Output is byte-stable for identical inputs: fixed orders, '\n' endings, and
PNG metadata stripped of version stamps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .dataio import write_rows
from .errors import ValidationError


@dataclass
class ReportTable:
    """One named result table plus how to plot it.

    kind: "table" (no figure), "accuracy", "power", "rmse_series",
    "f1_series", or "inclusion".
    """

    name: str
    columns: tuple[str, ...]
    rows: list[tuple]
    kind: str = "table"
    notes: tuple[str, ...] = ()


def format_significant(value, digits: int = 4) -> str:
    """Fixed-width display with ``digits`` significant digits."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (int,)):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return str(value)
        if value == 0:
            return "0.000"
        return f"{value:.{digits}g}"
    return str(value)


def render_text_table(table: ReportTable) -> str:
    cells = [[format_significant(v) for v in row] for row in table.rows]
    widths = [
        max(len(name), *(len(row[k]) for row in cells)) if cells else len(name)
        for k, name in enumerate(table.columns)
    ]
    lines = [table.name]
    lines.append("  ".join(name.ljust(w) for name, w in zip(table.columns, widths)))
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    for note in table.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def _column(table: ReportTable, name: str) -> list:
    try:
        pos = table.columns.index(name)
    except ValueError:
        raise ValidationError(f"table {table.name} has no column {name!r}") from None
    return [row[pos] for row in table.rows]


def _render_figure(table: ReportTable, path: Path) -> bool:
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    drew = False
    if table.kind in ("rmse_series", "accuracy"):
        y_col = "rmse" if table.kind == "rmse_series" else "mean_error"
        groups: dict[str, list[tuple[float, float]]] = {}
        has_label = "covariates" in table.columns
        for row in table.rows:
            label = str(row[table.columns.index("covariates")]) if has_label else ""
            groups.setdefault(label, []).append(
                (float(row[table.columns.index("n")]), float(row[table.columns.index(y_col)]))
            )
        for label, points in sorted(groups.items()):
            points.sort()
            ax.plot(*zip(*points), marker="o", label=label or None)
        ax.set_xlabel("sample size n")
        ax.set_ylabel("relative MSE" if table.kind == "rmse_series" else "mean error")
        if any(groups) and has_label:
            ax.legend()
        drew = bool(table.rows)
    elif table.kind == "f1_series":
        groups = {}
        for row in table.rows:
            key = f"slot {row[table.columns.index('slot')]}, {row[table.columns.index('rule')]}"
            groups.setdefault(key, []).append(
                (float(row[table.columns.index("n")]), float(row[table.columns.index("f1")]))
            )
        for label, points in sorted(groups.items()):
            points.sort()
            ax.plot(*zip(*points), marker="o", label=label)
        ax.set_xlabel("sample size n")
        ax.set_ylabel("F1 score")
        ax.set_ylim(-0.02, 1.02)
        if groups:
            ax.legend()
        drew = bool(table.rows)
    elif table.kind == "power":
        groups = {}
        for row in table.rows:
            key = f"n = {row[table.columns.index('n')]}"
            groups.setdefault(key, []).append(
                (
                    float(row[table.columns.index("gamma")]),
                    float(row[table.columns.index("rejection_rate")]),
                )
            )
        for label, points in sorted(groups.items()):
            points.sort()
            ax.plot(*zip(*points), marker="o", label=label)
        ax.set_xlabel("slope parameter value")
        ax.set_ylabel("rejection rate")
        ax.set_ylim(-0.02, 1.02)
        if groups:
            ax.legend()
        drew = bool(table.rows)
    elif table.kind == "inclusion":
        probs = [float(v) for v in _column(table, "probability")]
        ax.hist(probs, bins=20, range=(0.0, 1.0))
        ax.set_xlabel("inclusion probability")
        ax.set_ylabel("count of (vertex, neighbor, slot) terms")
        drew = bool(table.rows)
    if drew:
        ax.set_title(table.name)
        fig.tight_layout()
        fig.savefig(path, format="png", dpi=120, metadata={"Software": None})
    plt.close(fig)
    return drew


def emit_report(
    tables: Sequence[ReportTable], out_dir: str | Path, figures: bool = True
) -> list[Path]:
    """Write every table's CSV, text, and (where applicable) figure files."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out_dir}: {exc}") from exc
    written: list[Path] = []
    for table in tables:
        csv_path = out_dir / f"{table.name}.csv"
        write_rows(csv_path, table.columns, table.rows)
        written.append(csv_path)
        txt_path = out_dir / f"{table.name}.txt"
        txt_path.write_text(render_text_table(table), encoding="utf-8")
        written.append(txt_path)
        if figures and table.kind != "table":
            fig_path = out_dir / f"{table.name}.png"
            if _render_figure(table, fig_path):
                written.append(fig_path)
    return written
