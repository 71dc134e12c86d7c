"""Command-line interface.

Subcommands: simulate, fit-mle, test-lrt, fit-pseudo, select, evaluate.
Each reads a JSON config (--config) with optional overrides --seed, --out,
and --threads.  Exit codes: 0 success, 1 validation error, 2 numerical
failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Mapping

import numpy as np

from . import dataio
from .bdmcmc import SelectOptions, f1_score
from .errors import NumericalError, ValidationError
from .experiments import (
    resolve_covariate_values,
    resolve_model,
    run_accuracy_study,
    run_lrt_calibration,
    run_recovery_study,
    run_rmse_study,
    run_selection,
)
from .inference import asymptotic_covariance, lrt
from .ising import DynamicIsingStructure, fit_pseudo
from .loglinear import ModelSpec, cell_string
from .mle import newton_fit
from .report import ReportTable, emit_report

TASKS = ("simulate", "fit-mle", "test-lrt", "fit-pseudo", "select", "evaluate")


def _require(config: Mapping, key: str):
    if key not in config:
        raise ValidationError(f"config: missing required field {key!r}")
    return config[key]


def _as_int_list(value, where: str) -> list[int]:
    if isinstance(value, (int, float)) and float(value).is_integer():
        return [int(value)]
    if isinstance(value, list) and value:
        return [int(v) for v in value]
    raise ValidationError(f"config.{where}: expected an integer or list of integers")


def _loglinear_model(config: Mapping) -> ModelSpec:
    model = resolve_model(_require(config, "model"), where="config.model")
    if not isinstance(model, ModelSpec):
        raise ValidationError("config.model: this task needs a log-linear model")
    return model


def _select_options(config: Mapping) -> SelectOptions:
    section = config.get("select", {})
    if not isinstance(section, Mapping):
        raise ValidationError("config.select: expected an object")
    return SelectOptions(
        criterion=section.get("criterion", "bic"),
        omega=float(section.get("omega", 0.0)),
        iterations=int(section.get("iterations", 5000)),
        burn_in=section.get("burn_in"),
        threshold=float(section.get("threshold", 0.5)),
        seed=int(config.get("seed", 0)),
    )


def _weight_range(config: Mapping, key: str) -> tuple[float, float] | None:
    value = config.get(key)
    if value is None:
        return None
    if isinstance(value, list) and len(value) == 2:
        return float(value[0]), float(value[1])
    raise ValidationError(f"config.{key}: expected [low, high]")


def task_simulate(config: Mapping, out_dir: Path) -> list[ReportTable]:
    model = _loglinear_model(config)
    table = run_accuracy_study(
        model,
        _as_int_list(_require(config, "n"), "n"),
        resolve_covariate_values(config.get("covariates", "S2")),
        str(config.get("covariates", "S2")),
        int(config.get("replications", 100)),
        int(config.get("seed", 0)),
    )
    return [table]


def task_fit_mle(config: Mapping, out_dir: Path) -> list[ReportTable]:
    model = _loglinear_model(config)
    data = dataio.read_dataset(_require(config, "data"), levels=model.levels)
    if data.covariate_count != model.covariate_count:
        raise ValidationError(
            f"data has {data.covariate_count} covariates, "
            f"model expects {model.covariate_count}"
        )
    fit = newton_fit(model, data)
    if not fit.converged:
        raise NumericalError(
            f"fit did not converge within tolerance "
            f"(score sup-norm {fit.score_sup_norm:.3e})"
        )
    ses = np.sqrt(np.diag(asymptotic_covariance(fit)))
    flat = fit.theta.flat()
    rows = []
    pos = 0
    for h in range(model.covariate_count + 1):
        for cell in model.slot_cells(h):
            rows.append((h, cell_string(cell), float(flat[pos]), float(ses[pos])))
            pos += 1
    estimates = ReportTable(
        name="mle_estimates",
        columns=("slot", "cell", "estimate", "std_error"),
        rows=rows,
    )
    summary = ReportTable(
        name="mle_summary",
        columns=("n", "parameter_count", "log_likelihood", "iterations", "score_sup_norm"),
        rows=[(data.n, model.total_dim, fit.log_likelihood, fit.iterations, fit.score_sup_norm)],
        notes=fit.messages,
    )
    return [estimates, summary]


def task_test_lrt(config: Mapping, out_dir: Path) -> list[ReportTable]:
    if "data" in config:
        full = resolve_model(_require(config, "model_full"), where="config.model_full")
        null = resolve_model(_require(config, "model_null"), where="config.model_null")
        if not isinstance(full, ModelSpec) or not isinstance(null, ModelSpec):
            raise ValidationError("config: LRT needs log-linear models")
        data = dataio.read_dataset(config["data"], levels=full.levels)
        result = lrt(full, null, data)
        table = ReportTable(
            name="lrt_test",
            columns=("statistic", "degrees_of_freedom", "p_value"),
            rows=[(result.statistic, result.degrees_of_freedom, result.p_value)],
            notes=(result.null_description,),
        )
        return [table]
    model = _loglinear_model(config)
    gammas = _require(config, "gamma")
    if isinstance(gammas, (int, float)):
        gammas = [gammas]
    table = run_lrt_calibration(
        model,
        [float(g) for g in gammas],
        int(_require(config, "n")),
        resolve_covariate_values(config.get("covariates", "S2")),
        int(config.get("replications", 100)),
        float(config.get("level", 0.05)),
        int(config.get("seed", 0)),
    )
    return [table]


def _read_structure(config: Mapping, default_vertices: int = 0) -> DynamicIsingStructure:
    ref = _require(config, "structure")
    if isinstance(ref, str) and ref.endswith(".csv"):
        edges, slots = dataio.read_edge_lists(ref)
        vertices = default_vertices
        for mapping in edges:
            for u, v in mapping:
                vertices = max(vertices, v + 1)
        p = int(config.get("vertices", vertices))
        return DynamicIsingStructure.create(p, [set(m) for m in edges])
    model = resolve_model(ref, where="config.structure")
    if not isinstance(model, DynamicIsingStructure):
        raise ValidationError("config.structure: expected a dynamic Ising structure")
    return model


def task_fit_pseudo(config: Mapping, out_dir: Path) -> list[ReportTable]:
    if "data" in config:
        data = dataio.read_binary_dataset(config["data"])
        structure = _read_structure(config, default_vertices=data.vertex_count)
        if data.vertex_count != structure.vertex_count:
            raise ValidationError(
                f"data has {data.vertex_count} response columns, "
                f"structure has {structure.vertex_count} vertices"
            )
        if data.covariate_count != structure.covariate_count:
            raise ValidationError(
                f"data has {data.covariate_count} covariates, "
                f"structure expects {structure.covariate_count}"
            )
        params, fits = fit_pseudo(structure, data)
        out_dir.mkdir(parents=True, exist_ok=True)
        dataio.write_edge_lists(
            out_dir / "estimated_edges.csv",
            [sorted(e) for e in structure.edge_sets],
            weights=params.edge,
        )
        mains = ReportTable(
            name="pseudo_main_effects",
            columns=("slot", "vertex", "estimate"),
            rows=[
                (h, v + 1, float(params.main[v, h]))
                for h in range(structure.slot_count)
                for v in range(structure.vertex_count)
            ],
        )
        diagnostics = ReportTable(
            name="pseudo_diagnostics",
            columns=("vertex", "converged", "iterations", "score_sup_norm", "separated"),
            rows=[
                (v + 1, fits[v].converged, fits[v].iterations,
                 fits[v].score_sup_norm, fits[v].separated)
                for v in range(structure.vertex_count)
            ],
        )
        return [mains, diagnostics]
    table = run_rmse_study(
        int(_require(config, "p")),
        _as_int_list(_require(config, "edges_per_slot"), "edges_per_slot"),
        _as_int_list(_require(config, "n_values"), "n_values"),
        int(config.get("replications", 1)),
        int(config.get("seed", 0)),
        burn_in=int(config.get("gibbs_burn_in", 500)),
        edge_weight_range=_weight_range(config, "edge_weight_range"),
        main_range=_weight_range(config, "main_range"),
    )
    return [table]


def task_select(config: Mapping, out_dir: Path) -> list[ReportTable]:
    data = dataio.read_binary_dataset(_require(config, "data"))
    options = _select_options(config)
    threads = int(config.get("threads", 1))
    result, _traces = run_selection(data, options, threads=threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataio.write_edge_lists(out_dir / "edges_and.csv", result.edges_and)
    dataio.write_edge_lists(out_dir / "edges_or.csv", result.edges_or)
    prob_rows = [
        (v + 1, u + 1, h, float(result.probabilities[v][(u, h)]))
        for v in range(result.vertex_count)
        for (u, h) in sorted(result.probabilities[v])
    ]
    inclusion = ReportTable(
        name="inclusion_probabilities",
        columns=("vertex", "neighbor", "slot", "probability"),
        rows=prob_rows,
        kind="inclusion",
    )
    flagged = sorted(v + 1 for v, f in result.separation_flags.items() if f)
    summary = ReportTable(
        name="selection_summary",
        columns=("vertices", "slots", "threshold", "and_edges", "or_edges"),
        rows=[(
            result.vertex_count,
            result.slot_count,
            result.threshold,
            sum(len(e) for e in result.edges_and),
            sum(len(e) for e in result.edges_or),
        )],
        notes=(
            (f"separation flagged at vertices {flagged}",) if flagged else ()
        ),
    )
    return [inclusion, summary]


def task_evaluate(config: Mapping, out_dir: Path) -> list[ReportTable]:
    if "estimated" in config or "truth" in config:
        truth_edges, truth_slots = dataio.read_edge_lists(_require(config, "truth"))
        estimated = _require(config, "estimated")
        sources: list[tuple[str, str]] = []
        if isinstance(estimated, str):
            sources.append(("estimate", estimated))
        elif isinstance(estimated, Mapping):
            sources.extend((str(rule), path) for rule, path in sorted(estimated.items()))
        else:
            raise ValidationError(
                "config.estimated: expected a path or {rule: path} object"
            )
        rows = []
        for rule, path in sources:
            est_edges, est_slots = dataio.read_edge_lists(path)
            slots = max(truth_slots, est_slots)
            for h in range(slots):
                est = set(est_edges[h]) if h < len(est_edges) else set()
                tru = set(truth_edges[h]) if h < len(truth_edges) else set()
                rows.append((h, rule, f1_score(est, tru)))
        table = ReportTable(
            name="edge_recovery_f1",
            columns=("slot", "rule", "f1"),
            rows=rows,
        )
        return [table]
    table = run_recovery_study(
        int(_require(config, "p")),
        _as_int_list(_require(config, "edges_per_slot"), "edges_per_slot"),
        _as_int_list(_require(config, "n_values"), "n_values"),
        int(config.get("replications", 1)),
        int(config.get("seed", 0)),
        options=_select_options(config),
        burn_in=int(config.get("gibbs_burn_in", 500)),
        edge_weight_range=_weight_range(config, "edge_weight_range"),
        main_range=_weight_range(config, "main_range"),
        threads=int(config.get("threads", 1)),
    )
    return [table]


_DISPATCH = {
    "simulate": task_simulate,
    "fit-mle": task_fit_mle,
    "test-lrt": task_test_lrt,
    "fit-pseudo": task_fit_pseudo,
    "select": task_select,
    "evaluate": task_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdgm",
        description=(
            "Covariate-dependent discrete graphical models: estimation, "
            "testing, simulation, and structure learning."
        ),
    )
    sub = parser.add_subparsers(dest="task", required=True)
    helps = {
        "simulate": "parameter-accuracy simulation study",
        "fit-mle": "exact maximum likelihood on a dataset",
        "test-lrt": "likelihood-ratio test or its calibration study",
        "fit-pseudo": "pseudo-likelihood fit or relative-MSE study",
        "select": "structure learning by neighborhood birth-death MCMC",
        "evaluate": "edge-recovery F1 scoring or recovery study",
    }
    for task in TASKS:
        p = sub.add_parser(task, help=helps[task])
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--threads", type=int, default=None, help="worker count")
    return parser


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(config, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        declared = config.get("task")
        if declared is not None and declared != args.task:
            raise ValidationError(
                f"config declares task {declared!r} but {args.task!r} was requested"
            )
        if args.seed is not None:
            config["seed"] = args.seed
        if args.threads is not None:
            config["threads"] = args.threads
        if args.out is not None:
            config["out"] = args.out
        out_dir = Path(config.get("out", "out"))
        tables = _DISPATCH[args.task](config, out_dir)
        written = emit_report(tables, out_dir)
        print(f"{args.task}: wrote {len(written)} files to {out_dir}")
        for path in written:
            print(f"  {path}")
        return 0
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
