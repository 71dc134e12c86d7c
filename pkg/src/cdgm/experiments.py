"""Seeded experiment harness: simulation studies, fitting tasks, selection.

Every study derives its random streams from a single root seed with a fixed
scheme, so reruns with the same config are byte-identical:

* accuracy study: the true parameters come from (seed, size index) and stay
  fixed across replications; replication data comes from
  (seed, size index, replication).
* LRT calibration: the baseline truth comes from (seed,) and is shared by
  every gamma; data per (replication, gamma index) comes from
  (seed, replication, 1 + gamma index).
* Ising studies: the planted truth per replication from (seed, replication,
  0); Gibbs rows from (seed, replication, 1, row); selection chains from a
  seed spawned off (seed, replication, 2) and the vertex index.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from typing import Mapping, Sequence

import numpy as np

from . import dataio
from .bdmcmc import (
    NeighborhoodTrace,
    SelectOptions,
    SelectionResult,
    bdmcmc_run,
    f1_score,
    inclusion_probabilities,
    threshold_and_combine,
)
from .errors import NumericalError, ValidationError
from .inference import lrt
from .ising import (
    BinaryDataset,
    DynamicIsingStructure,
    IsingParameters,
    fit_pseudo,
    gibbs_sample,
    relative_mse,
)
from .loglinear import (
    GeneratingClass,
    ModelSpec,
    ObservationSet,
    ParameterSet,
    cell_probabilities,
)
from .mle import newton_fit
from .report import ReportTable

COVARIATE_SETS: dict[str, tuple[float, ...]] = {
    "S1": (0.1, 0.2, 0.3, 0.4, 0.5),
    "S2": (
        0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50,
        0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.99,
    ),
}

# Named graphs used by the simulation studies: two binary vertices with one
# interaction, and four binary vertices with four two-way terms plus one
# three-way term.  The "-mixed" variants give baseline and slope different
# structures.
PRESET_MODELS: dict[str, dict] = {
    "G2": {"levels": [2, 2], "slots": [[[0, 1]], [[0, 1]]]},
    "G4": {"levels": [2, 2, 2, 2], "slots": [[[0, 1], [0, 2, 3]], [[0, 1], [0, 2, 3]]]},
    "G2-mixed": {"levels": [2, 2], "slots": [[[0, 1]], [[0], [1]]]},
    "G4-mixed": {"levels": [2, 2, 2, 2], "slots": [[[0, 1], [2, 3]], [[0, 2, 3]]]},
}


def resolve_model(ref, where: str = "model") -> ModelSpec | DynamicIsingStructure:
    """Resolve a model reference: preset name, JSON path, or inline document."""
    if isinstance(ref, Mapping):
        return dataio.model_from_document(ref, where=where)
    if isinstance(ref, str):
        preset = PRESET_MODELS.get(ref)
        if preset is not None:
            return ModelSpec.from_maximal_sets(preset["levels"], preset["slots"])
        return dataio.read_model_spec(ref)
    raise ValidationError(f"{where}: expected a preset name, path, or JSON object")


def resolve_covariate_values(ref, where: str = "covariates") -> tuple[float, ...]:
    if isinstance(ref, str):
        values = COVARIATE_SETS.get(ref)
        if values is None:
            raise ValidationError(
                f"{where}: unknown covariate set {ref!r} (choose S1 or S2)"
            )
        return values
    if isinstance(ref, Sequence):
        values = tuple(float(v) for v in ref)
        if not values:
            raise ValidationError(f"{where}: covariate set may not be empty")
        return values
    raise ValidationError(f"{where}: expected 'S1', 'S2', or a list of values")


def block_counts(n: int, value_count: int) -> list[int]:
    """Observations per covariate value: equal blocks, remainder to the smallest."""
    base, rem = divmod(n, value_count)
    return [base + 1 if k < rem else base for k in range(value_count)]


def sample_loglinear_dataset(
    spec: ModelSpec,
    theta: ParameterSet,
    values: Sequence[float],
    n: int,
    rng: np.random.Generator,
) -> ObservationSet:
    """Draw n observations with covariates assigned in equal blocks of values."""
    if spec.covariate_count != 1:
        raise ValidationError("block-design simulation supports exactly one covariate")
    values = sorted(float(v) for v in values)
    counts = block_counts(n, len(values))
    all_cells = spec.levels.cells()
    cells = []
    covs = []
    for value, count in zip(values, counts):
        if count == 0:
            continue
        probs = cell_probabilities(spec, theta, [value])
        draws = rng.multinomial(count, probs)
        for idx in np.nonzero(draws)[0]:
            cells.append(np.repeat(all_cells[idx][None, :], draws[idx], axis=0))
        covs.append(np.full((count, 1), value))
    return ObservationSet(np.vstack(cells), np.vstack(covs))


def run_accuracy_study(
    model: ModelSpec,
    n_values: Sequence[int],
    covariate_values: Sequence[float],
    covariate_label: str,
    replications: int,
    seed: int,
) -> ReportTable:
    """Parameter-accuracy study: mean l2 error over the parameter count.

    For each table cell one true parameter vector is drawn from a standard
    normal; replications redraw the data only (drawing a fresh truth per
    replication would make the summary track the heavy tail of the inverse
    information rather than estimator accuracy).  The reported error is
    ||theta_hat - theta*||_2 / dim averaged over replications.
    """
    if replications < 1:
        raise ValidationError("replications must be >= 1")
    rows = []
    notes = []
    dim = model.total_dim
    for ni, n in enumerate(n_values):
        counts = block_counts(int(n), len(covariate_values))
        if len(set(counts)) > 1:
            notes.append(
                f"n={n}: {n % len(covariate_values)} covariate values carry one extra observation"
            )
        truth_rng = np.random.default_rng((int(seed), ni))
        truth = ParameterSet.from_flat(model, truth_rng.standard_normal(dim))
        errors = []
        for rep in range(replications):
            rng = np.random.default_rng((int(seed), ni, rep))
            data = sample_loglinear_dataset(model, truth, covariate_values, int(n), rng)
            fit = newton_fit(model, data)
            if not fit.converged:
                raise NumericalError(
                    f"accuracy study fit did not converge at n={n}, rep={rep}"
                )
            errors.append(
                float(np.linalg.norm(fit.theta.flat() - truth.flat())) / dim
            )
        mean = statistics.fmean(errors)
        se = statistics.stdev(errors) / math.sqrt(len(errors)) if len(errors) > 1 else 0.0
        rows.append((int(n), covariate_label, replications, dim, mean, se))
    return ReportTable(
        name="estimation_accuracy",
        columns=("n", "covariates", "replications", "parameter_count", "mean_error", "se_error"),
        rows=rows,
        kind="accuracy",
        notes=tuple(notes),
    )


def null_model(model: ModelSpec) -> ModelSpec:
    """The same baseline with every slope generating class emptied."""
    empty = GeneratingClass(frozenset())
    return ModelSpec(model.levels, (model.classes[0],) + (empty,) * model.covariate_count)


def run_lrt_calibration(
    model: ModelSpec,
    gammas: Sequence[float],
    n: int,
    covariate_values: Sequence[float],
    replications: int,
    level: float,
    seed: int,
) -> ReportTable:
    """Rejection rates of the slope-free null across slope strengths gamma.

    The baseline truth is one standard-normal draw per study (as in the
    accuracy study); replications redraw the data.  Data streams are matched
    across gamma values through shared per-replication seeds.
    """
    if not 0 < level < 1:
        raise ValidationError("significance level must be in (0, 1)")
    null = null_model(model)
    slope_dims = model.block_dims[1:]
    baseline = np.random.default_rng((int(seed),)).standard_normal(model.block_dims[0])
    rows = []
    for gi, gamma in enumerate(gammas):
        blocks = [baseline] + [np.full(d, float(gamma)) for d in slope_dims]
        truth = ParameterSet(tuple(blocks))
        rejections = 0
        for rep in range(replications):
            data_rng = np.random.default_rng((int(seed), rep, 1 + gi))
            data = sample_loglinear_dataset(model, truth, covariate_values, n, data_rng)
            result = lrt(model, null, data)
            if result.p_value < level:
                rejections += 1
        rate = rejections / replications
        se = math.sqrt(rate * (1.0 - rate) / replications)
        rows.append((float(gamma), int(n), replications, rate, se))
    return ReportTable(
        name="lrt_calibration",
        columns=("gamma", "n", "replications", "rejection_rate", "se"),
        rows=rows,
        kind="power",
        notes=(f"significance level {level}",),
    )


def all_pairs(p: int) -> list[tuple[int, int]]:
    return [(u, v) for u in range(p) for v in range(u + 1, p)]


def planted_ising_model(
    p: int,
    edges_per_slot: Sequence[int],
    rng: np.random.Generator,
    edge_weight_range: tuple[float, float] | None = None,
    main_range: tuple[float, float] | None = None,
) -> tuple[DynamicIsingStructure, IsingParameters]:
    """Random sparse truth: edge sets drawn uniformly, weights drawn per slot.

    Without explicit ranges all parameters are standard normal draws; a
    range (lo, hi) draws magnitudes uniformly with random signs.
    """
    pairs = all_pairs(p)
    edge_sets = []
    for k in edges_per_slot:
        if k > len(pairs):
            raise ValidationError(f"cannot place {k} edges among {len(pairs)} pairs")
        chosen = rng.permutation(len(pairs))[: int(k)]
        edge_sets.append(frozenset(pairs[int(i)] for i in chosen))
    structure = DynamicIsingStructure(p, tuple(edge_sets))

    slots = structure.slot_count
    if main_range is None:
        main = rng.standard_normal((p, slots))
    else:
        main = rng.uniform(main_range[0], main_range[1], size=(p, slots))
    edge = []
    for h in range(slots):
        weights = {}
        for pair in sorted(structure.edge_sets[h]):
            if edge_weight_range is None:
                weights[pair] = float(rng.standard_normal())
            else:
                magnitude = rng.uniform(edge_weight_range[0], edge_weight_range[1])
                sign = 1.0 if rng.random() < 0.5 else -1.0
                weights[pair] = float(sign * magnitude)
        edge.append(weights)
    return structure, IsingParameters(main, tuple(edge))


def run_rmse_study(
    p: int,
    edges_per_slot: Sequence[int],
    n_values: Sequence[int],
    replications: int,
    seed: int,
    burn_in: int = 500,
    edge_weight_range: tuple[float, float] | None = None,
    main_range: tuple[float, float] | None = None,
) -> ReportTable:
    """Relative MSE of the pseudo-likelihood estimate versus sample size.

    One Gibbs pool of max(n_values) rows is drawn per replication; smaller
    sample sizes reuse its prefixes, mirroring a subsampled long run.
    """
    if replications < 1:
        raise ValidationError("replications must be >= 1")
    n_values = sorted(int(n) for n in n_values)
    n_max = n_values[-1]
    per_n: dict[int, list[float]] = {n: [] for n in n_values}
    for rep in range(replications):
        truth_rng = np.random.default_rng((int(seed), rep, 0))
        structure, params = planted_ising_model(
            p, edges_per_slot, truth_rng, edge_weight_range, main_range
        )
        covariates = truth_rng.random((n_max, 1))
        pool = gibbs_sample(
            structure, params, covariates, burn_in=burn_in, seed=(int(seed), rep, 1)
        )
        truth_vec = params.as_vector(structure)
        for n in n_values:
            estimate, _ = fit_pseudo(structure, pool.head(n))
            per_n[n].append(relative_mse(estimate.as_vector(structure), truth_vec))
    rows = [(n, statistics.fmean(per_n[n])) for n in n_values]
    return ReportTable(
        name="rmse_vs_n",
        columns=("n", "rmse"),
        rows=rows,
        kind="rmse_series",
        notes=(f"{replications} replications, {p} vertices",),
    )


def _selection_worker(args) -> tuple[int, NeighborhoodTrace]:
    responses, covariates, vertex, options = args
    data = BinaryDataset(responses, covariates)
    return vertex, bdmcmc_run(data, vertex, options)


def run_selection(
    data: BinaryDataset, options: SelectOptions | None = None, threads: int = 1
) -> tuple[SelectionResult, dict[int, NeighborhoodTrace]]:
    """Neighborhood BDMCMC for every vertex, then threshold and combine."""
    options = options or SelectOptions()
    vertices = range(data.vertex_count)
    traces: dict[int, NeighborhoodTrace] = {}
    if threads > 1:
        jobs = [(data.responses, data.covariates, v, options) for v in vertices]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for v, trace in pool.map(_selection_worker, jobs):
                traces[v] = trace
    else:
        for v in vertices:
            traces[v] = bdmcmc_run(data, v, options)
    burn = options.resolved_burn_in
    probabilities = {v: inclusion_probabilities(traces[v], burn) for v in vertices}
    result = threshold_and_combine(
        probabilities,
        data.vertex_count,
        data.covariate_count + 1,
        options.threshold,
    )
    flags = {v: traces[v].separation_flagged for v in vertices}
    result = SelectionResult(
        vertex_count=result.vertex_count,
        slot_count=result.slot_count,
        threshold=result.threshold,
        probabilities=result.probabilities,
        neighborhoods=result.neighborhoods,
        edges_and=result.edges_and,
        edges_or=result.edges_or,
        separation_flags=flags,
    )
    return result, traces


def run_recovery_study(
    p: int,
    edges_per_slot: Sequence[int],
    n_values: Sequence[int],
    replications: int,
    seed: int,
    options: SelectOptions | None = None,
    burn_in: int = 500,
    edge_weight_range: tuple[float, float] | None = None,
    main_range: tuple[float, float] | None = None,
    threads: int = 1,
) -> ReportTable:
    """Structure recovery: median per-slot F1 of both rules versus sample size."""
    if replications < 1:
        raise ValidationError("replications must be >= 1")
    options = options or SelectOptions()
    n_values = sorted(int(n) for n in n_values)
    n_max = n_values[-1]
    slots = len(edges_per_slot)
    scores: dict[tuple[int, int, str], list[float]] = {}
    for rep in range(replications):
        truth_rng = np.random.default_rng((int(seed), rep, 0))
        structure, params = planted_ising_model(
            p, edges_per_slot, truth_rng, edge_weight_range, main_range
        )
        covariates = truth_rng.random((n_max, structure.covariate_count))
        pool = gibbs_sample(
            structure, params, covariates, burn_in=burn_in, seed=(int(seed), rep, 1)
        )
        run_seed = int(np.random.SeedSequence((int(seed), rep, 2)).generate_state(1)[0])
        rep_options = SelectOptions(
            criterion=options.criterion,
            omega=options.omega,
            iterations=options.iterations,
            burn_in=options.burn_in,
            threshold=options.threshold,
            seed=run_seed,
        )
        for n in n_values:
            selection, _ = run_selection(pool.head(n), rep_options, threads=threads)
            for h in range(slots):
                truth_edges = structure.edge_sets[h]
                scores.setdefault((n, h, "and"), []).append(
                    f1_score(selection.edges_and[h], truth_edges)
                )
                scores.setdefault((n, h, "or"), []).append(
                    f1_score(selection.edges_or[h], truth_edges)
                )
    rows = [
        (n, h, rule, statistics.median(scores[(n, h, rule)]))
        for n in n_values
        for h in range(slots)
        for rule in ("and", "or")
    ]
    return ReportTable(
        name="f1_vs_n",
        columns=("n", "slot", "rule", "f1"),
        rows=rows,
        kind="f1_series",
        notes=(f"median over {replications} replications, {p} vertices",),
    )
