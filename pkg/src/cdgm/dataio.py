"""File formats: CSV datasets, JSON model documents, CSV edge lists.

Datasets are UTF-8, comma-delimited CSV with a header row.  Response columns
are named y1..yp and hold integer levels; covariate columns are named x1..xH
and hold decimal reals with a '.' separator.  Model documents are JSON with a
"kind" discriminator ("loglinear" or "ising").  Edge lists are CSV rows of
(slot, u, v[, weight]) with 1-based vertex indices and u < v.

All writers emit canonical, byte-stable output: fixed column orders, '\n'
line endings, and full-precision floats via repr.
"""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .ising import BinaryDataset, DynamicIsingStructure
from .loglinear import LevelSpace, ModelSpec, ObservationSet


def _format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write one CSV file with canonical formatting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_value(v) for v in row])


def _split_header(header: Sequence[str], path: str) -> tuple[list[int], list[int]]:
    y_cols: dict[int, int] = {}
    x_cols: dict[int, int] = {}
    for pos, name in enumerate(header):
        m = re.fullmatch(r"y([1-9][0-9]*)", name.strip())
        if m:
            y_cols[int(m.group(1))] = pos
            continue
        m = re.fullmatch(r"x([1-9][0-9]*)", name.strip())
        if m:
            x_cols[int(m.group(1))] = pos
            continue
        raise ValidationError(f"{path}: unknown column {name!r} (expected y<k> or x<k>)")
    if not y_cols:
        raise ValidationError(f"{path}: no response columns y1.. found")
    for group, cols in (("y", y_cols), ("x", x_cols)):
        expected = set(range(1, len(cols) + 1))
        if set(cols) != expected:
            missing = sorted(expected - set(cols))
            raise ValidationError(
                f"{path}: missing column {group}{missing[0]}"
            )
    return (
        [y_cols[k] for k in sorted(y_cols)],
        [x_cols[k] for k in sorted(x_cols)],
    )


def _read_table(path: str | Path) -> tuple[list[int], list[int], list[list[str]]]:
    path = str(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file, expected a header row") from None
        rows = [row for row in reader if row]
    y_pos, x_pos = _split_header(header, path)
    width = len(y_pos) + len(x_pos)
    for k, row in enumerate(rows):
        if len(row) != width:
            raise ValidationError(
                f"{path}: row {k + 1} has {len(row)} fields, expected {width}"
            )
    return y_pos, x_pos, rows


def read_dataset(
    path: str | Path, levels: Sequence[int] | None = None
) -> ObservationSet:
    """Read a dataset CSV; validate levels when a level space is supplied.

    Errors carry the 1-based data row (header excluded) and the column name.
    """
    path = str(path)
    y_pos, x_pos, rows = _read_table(path)
    p, h_count = len(y_pos), len(x_pos)
    cells = np.zeros((len(rows), p), dtype=np.int64)
    covs = np.zeros((len(rows), h_count), dtype=np.float64)
    for r, row in enumerate(rows):
        for k, pos in enumerate(y_pos):
            text = row[pos].strip()
            try:
                value = int(text)
            except ValueError:
                raise ValidationError(
                    f"{path}: row {r + 1}, column y{k + 1}: "
                    f"non-integer level {text!r}"
                ) from None
            if value < 0:
                raise ValidationError(
                    f"{path}: row {r + 1}, column y{k + 1}: negative level {value}"
                )
            cells[r, k] = value
        for k, pos in enumerate(x_pos):
            text = row[pos].strip()
            try:
                value = float(text)
            except ValueError:
                raise ValidationError(
                    f"{path}: row {r + 1}, column x{k + 1}: "
                    f"non-numeric covariate {text!r}"
                ) from None
            if not math.isfinite(value):
                raise ValidationError(
                    f"{path}: row {r + 1}, column x{k + 1}: non-finite covariate"
                )
            covs[r, k] = value
    if levels is not None:
        space = levels if isinstance(levels, LevelSpace) else LevelSpace(tuple(levels))
        if space.vertex_count != p:
            raise ValidationError(
                f"{path}: {p} response columns for a {space.vertex_count}-vertex model"
            )
        bound = np.asarray(space.levels)
        if len(rows) and np.any(cells >= bound):
            r, c = map(int, np.argwhere(cells >= bound)[0])
            raise ValidationError(
                f"{path}: row {r + 1}, column y{c + 1}: level {cells[r, c]} "
                f"out of range [0, {bound[c]})"
            )
    return ObservationSet(cells, covs)


def read_binary_dataset(path: str | Path) -> BinaryDataset:
    """Read a dataset CSV whose responses must all be binary."""
    data = read_dataset(path)
    if data.n and data.cells.max(initial=0) > 1:
        r, c = map(int, np.argwhere(data.cells > 1)[0])
        raise ValidationError(
            f"{path}: row {r + 1}, column y{c + 1}: level {data.cells[r, c]} "
            f"out of range [0, 2)"
        )
    return BinaryDataset(data.cells.astype(np.int8), data.covariates)


def write_dataset(path: str | Path, data: ObservationSet | BinaryDataset) -> None:
    cells = data.cells if isinstance(data, ObservationSet) else data.responses
    covs = data.covariates
    p = cells.shape[1]
    h_count = covs.shape[1]
    header = [f"y{k}" for k in range(1, p + 1)] + [f"x{k}" for k in range(1, h_count + 1)]
    rows = (
        [int(v) for v in cells[r]] + [float(v) for v in covs[r]]
        for r in range(cells.shape[0])
    )
    write_rows(path, header, rows)


def _resolve_vertex(token, names: Sequence[str], where: str) -> int:
    """Map a vertex reference (name or 1-based index) to a 0-based index."""
    if isinstance(token, str):
        if token in names:
            return names.index(token)
        raise ValidationError(f"{where}: unknown vertex name {token!r}")
    if isinstance(token, (int, float)) and float(token).is_integer():
        idx = int(token)
        if not 1 <= idx <= len(names):
            raise ValidationError(
                f"{where}: vertex index {idx} out of range [1, {len(names)}]"
            )
        return idx - 1
    raise ValidationError(f"{where}: vertex reference {token!r} is not a name or index")


def default_vertex_names(p: int) -> list[str]:
    """'a', 'b', ... for small p; 'v1', 'v2', ... beyond 26 vertices."""
    if p <= 26:
        return [chr(ord("a") + k) for k in range(p)]
    return [f"v{k + 1}" for k in range(p)]


def model_from_document(doc: Mapping, where: str = "model") -> ModelSpec | DynamicIsingStructure:
    """Build a model from a parsed JSON document."""
    if not isinstance(doc, Mapping):
        raise ValidationError(f"{where}: expected a JSON object")
    kind = doc.get("kind")
    if kind == "loglinear":
        levels = doc.get("levels")
        if not isinstance(levels, list) or not levels:
            raise ValidationError(f"{where}.levels: expected a nonempty list")
        names = doc.get("vertex_names") or default_vertex_names(len(levels))
        if len(names) != len(levels):
            raise ValidationError(
                f"{where}.vertex_names: {len(names)} names for {len(levels)} vertices"
            )
        slots = doc.get("slots")
        if not isinstance(slots, list) or not slots:
            raise ValidationError(f"{where}.slots: expected a nonempty list of slots")
        slot_sets = []
        for h, groups in enumerate(slots):
            if not isinstance(groups, list):
                raise ValidationError(f"{where}.slots[{h}]: expected a list of sets")
            sets = []
            for g, group in enumerate(groups):
                if not isinstance(group, list) or not group:
                    raise ValidationError(
                        f"{where}.slots[{h}][{g}]: expected a nonempty list of vertices"
                    )
                sets.append(
                    [
                        _resolve_vertex(tok, names, f"{where}.slots[{h}][{g}]")
                        for tok in group
                    ]
                )
            slot_sets.append(sets)
        auto_close = bool(doc.get("auto_close", True))
        try:
            return ModelSpec.from_maximal_sets(levels, slot_sets, auto_close=auto_close)
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
    if kind == "ising":
        vertices = doc.get("vertices")
        if isinstance(vertices, list):
            names = [str(v) for v in vertices]
        elif isinstance(vertices, int) and vertices >= 1:
            names = default_vertex_names(vertices)
        else:
            raise ValidationError(
                f"{where}.vertices: expected a vertex count or list of names"
            )
        edges_doc = doc.get("edges")
        if not isinstance(edges_doc, list) or not edges_doc:
            raise ValidationError(f"{where}.edges: expected one edge list per slot")
        slots = []
        for h, edge_list in enumerate(edges_doc):
            if not isinstance(edge_list, list):
                raise ValidationError(f"{where}.edges[{h}]: expected a list of pairs")
            pairs = []
            for g, pair in enumerate(edge_list):
                if not isinstance(pair, list) or len(pair) != 2:
                    raise ValidationError(
                        f"{where}.edges[{h}][{g}]: expected a [u, v] pair"
                    )
                u = _resolve_vertex(pair[0], names, f"{where}.edges[{h}][{g}]")
                v = _resolve_vertex(pair[1], names, f"{where}.edges[{h}][{g}]")
                if u == v:
                    raise ValidationError(
                        f"{where}.edges[{h}][{g}]: self-loop edge on vertex {pair[0]!r}"
                    )
                pairs.append((u, v))
            slots.append(pairs)
        return DynamicIsingStructure.create(len(names), slots)
    raise ValidationError(
        f"{where}.kind: expected 'loglinear' or 'ising', got {kind!r}"
    )


def read_model_spec(path: str | Path) -> ModelSpec | DynamicIsingStructure:
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from None
    return model_from_document(doc, where=path)


def write_model_spec(path: str | Path, model: ModelSpec | DynamicIsingStructure) -> None:
    if isinstance(model, ModelSpec):
        p = model.levels.vertex_count
        names = default_vertex_names(p)
        doc = {
            "kind": "loglinear",
            "levels": list(model.levels.levels),
            "vertex_names": names,
            "slots": [
                [sorted(names[v] for v in d) for d in sorted(g.sets, key=sorted)]
                for g in model.classes
            ],
            "auto_close": False,
        }
    elif isinstance(model, DynamicIsingStructure):
        doc = {
            "kind": "ising",
            "vertices": model.vertex_count,
            "edges": [
                [[u + 1, v + 1] for u, v in sorted(edges)]
                for edges in model.edge_sets
            ],
        }
    else:
        raise ValidationError(f"cannot serialize model of type {type(model).__name__}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_edge_lists(
    path: str | Path,
    edges_per_slot: Sequence[Iterable[tuple[int, int]]],
    weights: Sequence[Mapping[tuple[int, int], float]] | None = None,
) -> None:
    """Write per-slot edges as CSV rows (slot, u, v[, weight]), 1-based vertices."""
    with_weight = weights is not None
    header = ["slot", "u", "v"] + (["weight"] if with_weight else [])
    rows = []
    for h, edges in enumerate(edges_per_slot):
        for u, v in sorted(tuple(sorted((int(a), int(b)))) for a, b in edges):
            row = [h, u + 1, v + 1]
            if with_weight:
                row.append(float(weights[h][(u, v)]))
            rows.append(row)
    write_rows(path, header, rows)


def read_edge_lists(
    path: str | Path, slot_count: int | None = None
) -> tuple[list[dict[tuple[int, int], float | None]], int]:
    """Read an edge-list CSV; returns per-slot {edge: weight-or-None} and slot count."""
    path = str(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file, expected a header row") from None
        if header[:3] != ["slot", "u", "v"] or header not in (
            ["slot", "u", "v"],
            ["slot", "u", "v", "weight"],
        ):
            raise ValidationError(
                f"{path}: expected header slot,u,v[,weight], got {','.join(header)}"
            )
        has_weight = len(header) == 4
        rows = [row for row in reader if row]
    slots: dict[int, dict[tuple[int, int], float | None]] = {}
    max_slot = -1
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise ValidationError(
                f"{path}: row {r + 1} has {len(row)} fields, expected {len(header)}"
            )
        try:
            h, u, v = int(row[0]), int(row[1]), int(row[2])
        except ValueError:
            raise ValidationError(
                f"{path}: row {r + 1}: non-integer slot or vertex"
            ) from None
        if h < 0:
            raise ValidationError(f"{path}: row {r + 1}: negative slot {h}")
        if slot_count is not None and h >= slot_count:
            raise ValidationError(
                f"{path}: row {r + 1}: slot {h} out of range [0, {slot_count})"
            )
        if u < 1 or v < 1:
            raise ValidationError(f"{path}: row {r + 1}: vertex indices are 1-based")
        if u == v:
            raise ValidationError(f"{path}: row {r + 1}: self-loop edge ({u}, {v})")
        if u > v:
            raise ValidationError(
                f"{path}: row {r + 1}: edge ({u}, {v}) must satisfy u < v"
            )
        weight = float(row[3]) if has_weight else None
        max_slot = max(max_slot, h)
        slots.setdefault(h, {})[(u - 1, v - 1)] = weight
    count = slot_count if slot_count is not None else max_slot + 1
    return [slots.get(h, {}) for h in range(max(count, 0))], max(count, 0)
