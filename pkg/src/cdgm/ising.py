"""Dynamic Ising models: representation, Gibbs simulation, pseudo-likelihood.

The model is binary and pairwise.  Main effects and edge interactions are
linear in the covariates: slot 0 is the covariate-free baseline and slot
h >= 1 multiplies the h-th covariate.  For large vertex counts the joint
normalizer is intractable, so estimation goes through per-vertex logistic
regressions (one conditional likelihood per vertex, edge estimates averaged
across the two incident fits).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ValidationError
from .loglinear import LevelSpace, ObservationSet

# Coefficients beyond this magnitude with an undiminished gradient indicate
# perfect separation; the fit is capped and flagged instead of diverging.
SEPARATION_CAP = 30.0

DEFAULT_BURN_IN = 500

# Upper bound on the uniform-draw buffer a Gibbs block may hold (doubles).
_GIBBS_BLOCK_BUDGET = 32_000_000


def _normalize_edge(u: int, v: int) -> tuple[int, int]:
    u, v = int(u), int(v)
    if u == v:
        raise ValidationError(f"self-loop edge ({u}, {v})")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class DynamicIsingStructure:
    """Vertex count plus one undirected edge set per covariate slot."""

    vertex_count: int
    edge_sets: tuple[frozenset[tuple[int, int]], ...]

    def __post_init__(self) -> None:
        p = int(self.vertex_count)
        object.__setattr__(self, "vertex_count", p)
        if p < 1:
            raise ValidationError("vertex count must be >= 1")
        if not self.edge_sets:
            raise ValidationError("need at least the baseline slot")
        normalized = []
        for edges in self.edge_sets:
            pairs = frozenset(_normalize_edge(u, v) for u, v in edges)
            for u, v in pairs:
                if not (0 <= u < p and 0 <= v < p):
                    raise ValidationError(
                        f"edge ({u}, {v}) out of range for {p} vertices"
                    )
            normalized.append(pairs)
        object.__setattr__(self, "edge_sets", tuple(normalized))

    @classmethod
    def create(
        cls, vertex_count: int, edge_sets: Sequence[Iterable[tuple[int, int]]]
    ) -> "DynamicIsingStructure":
        return cls(vertex_count, tuple(frozenset(e) for e in edge_sets))

    @property
    def covariate_count(self) -> int:
        return len(self.edge_sets) - 1

    @property
    def slot_count(self) -> int:
        return len(self.edge_sets)

    @property
    def combined_edges(self) -> frozenset[tuple[int, int]]:
        out: set[tuple[int, int]] = set()
        for edges in self.edge_sets:
            out |= edges
        return frozenset(out)

    def neighbors(self, v: int, h: int) -> tuple[int, ...]:
        """Sorted neighbors of ``v`` in the slot-``h`` edge set."""
        return tuple(
            sorted(u if w == v else w for u, w in self.edge_sets[h] if v in (u, w))
        )


@dataclass(frozen=True)
class IsingParameters:
    """Main effects (p, H+1) and per-slot edge weights keyed by (u, v)."""

    main: np.ndarray
    edge: tuple[dict[tuple[int, int], float], ...]

    def __post_init__(self) -> None:
        main = np.array(self.main, dtype=np.float64)
        if main.ndim != 2:
            raise ValidationError("main effects must be a (p, H+1) array")
        if not np.all(np.isfinite(main)):
            raise ValidationError("main effects must be finite")
        main.setflags(write=False)
        object.__setattr__(self, "main", main)
        if len(self.edge) != main.shape[1]:
            raise ValidationError(
                f"{len(self.edge)} edge slots for {main.shape[1]} parameter slots"
            )
        cleaned = []
        for mapping in self.edge:
            d: dict[tuple[int, int], float] = {}
            for (u, v), w in mapping.items():
                w = float(w)
                if not math.isfinite(w):
                    raise ValidationError(f"edge weight for ({u}, {v}) must be finite")
                d[_normalize_edge(u, v)] = w
            cleaned.append(d)
        object.__setattr__(self, "edge", tuple(cleaned))

    @classmethod
    def zeros(cls, structure: DynamicIsingStructure) -> "IsingParameters":
        return cls(
            np.zeros((structure.vertex_count, structure.slot_count)),
            tuple({e: 0.0 for e in edges} for edges in structure.edge_sets),
        )

    def validate_for(self, structure: DynamicIsingStructure) -> None:
        if self.main.shape != (structure.vertex_count, structure.slot_count):
            raise ValidationError(
                f"main effects shape {self.main.shape} does not match "
                f"({structure.vertex_count}, {structure.slot_count})"
            )
        for h, (edges, weights) in enumerate(zip(structure.edge_sets, self.edge)):
            if set(weights) != set(edges):
                raise ValidationError(
                    f"slot {h} edge weights do not match the structure's edge set"
                )

    def edge_weight(self, u: int, v: int, h: int) -> float:
        return self.edge[h][_normalize_edge(u, v)]

    def as_vector(self, structure: DynamicIsingStructure) -> np.ndarray:
        """Flatten into slot-major order: mains by vertex, then sorted edges."""
        self.validate_for(structure)
        parts = [self.main[:, h] for h in range(structure.slot_count)]
        for h in range(structure.slot_count):
            pairs = sorted(structure.edge_sets[h])
            parts.append(np.array([self.edge[h][e] for e in pairs]))
        return np.concatenate(parts) if parts else np.zeros(0)

    @classmethod
    def from_vector(
        cls, structure: DynamicIsingStructure, vec: Sequence[float]
    ) -> "IsingParameters":
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        p, slots = structure.vertex_count, structure.slot_count
        main = np.empty((p, slots))
        pos = 0
        for h in range(slots):
            main[:, h] = vec[pos : pos + p]
            pos += p
        edge = []
        for h in range(slots):
            pairs = sorted(structure.edge_sets[h])
            edge.append({e: float(w) for e, w in zip(pairs, vec[pos : pos + len(pairs)])})
            pos += len(pairs)
        if pos != vec.shape[0]:
            raise ValidationError(
                f"vector length {vec.shape[0]} does not match the structure ({pos})"
            )
        return cls(main, tuple(edge))


@dataclass(frozen=True)
class BinaryDataset:
    """n x p binary responses with an n x H covariate matrix."""

    responses: np.ndarray
    covariates: np.ndarray

    def __post_init__(self) -> None:
        resp = np.asarray(self.responses)
        if resp.ndim != 2:
            raise ValidationError("responses must be an (n, p) array")
        if resp.size and not np.isin(resp, (0, 1)).all():
            raise ValidationError("responses must be 0/1 valued")
        resp = resp.astype(np.int8)
        covs = np.asarray(self.covariates, dtype=np.float64)
        if covs.ndim != 2 or covs.shape[0] != resp.shape[0]:
            raise ValidationError(
                f"covariates shape {covs.shape} does not match {resp.shape[0]} rows"
            )
        if covs.size and not np.all(np.isfinite(covs)):
            raise ValidationError("covariates must be finite")
        resp.setflags(write=False)
        covs = covs.copy()
        covs.setflags(write=False)
        object.__setattr__(self, "responses", resp)
        object.__setattr__(self, "covariates", covs)

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def vertex_count(self) -> int:
        return self.responses.shape[1]

    @property
    def covariate_count(self) -> int:
        return self.covariates.shape[1]

    def head(self, n: int) -> "BinaryDataset":
        """The first ``n`` rows (a prefix view for sample-size sweeps)."""
        return BinaryDataset(self.responses[:n], self.covariates[:n])

    def to_observations(self) -> ObservationSet:
        return ObservationSet.create(
            self.responses.astype(np.int64),
            self.covariates,
            levels=LevelSpace((2,) * self.vertex_count),
        )

    @classmethod
    def from_observations(cls, data: ObservationSet) -> "BinaryDataset":
        return cls(data.cells, data.covariates)


@dataclass(frozen=True)
class VertexFit:
    """One vertex's conditional-likelihood fit.

    Coefficient layout matches the design-row layout: the H+1 intercepts
    (one per slot) first, then edge coefficients slot-major with neighbor
    indices ascending.
    """

    vertex: int
    neighborhoods: tuple[tuple[int, ...], ...]
    coefficients: np.ndarray
    log_pseudo_likelihood: float
    converged: bool
    iterations: int
    score_sup_norm: float
    separated: bool
    degenerate_columns: tuple[int, ...] = ()

    @property
    def slot_count(self) -> int:
        return len(self.neighborhoods)

    def intercept(self, h: int) -> float:
        return float(self.coefficients[h])

    def edge_coefficient(self, u: int, h: int) -> float:
        offset = self.slot_count
        for hh in range(h):
            offset += len(self.neighborhoods[hh])
        return float(self.coefficients[offset + self.neighborhoods[h].index(u)])


def _powers(covariates: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((covariates.shape[0], 1)), covariates])


def _check_x(structure: DynamicIsingStructure, x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != structure.covariate_count:
        raise ValidationError(
            f"covariate vector has length {x.shape[0]}, "
            f"expected {structure.covariate_count}"
        )
    return x


def conditional_prob(
    structure: DynamicIsingStructure,
    params: IsingParameters,
    y: Sequence[int],
    x: Sequence[float],
    v: int,
) -> float:
    """P(y_v = 1 | all other coordinates, x).

    ``y`` is a full length-p configuration; the entry at position ``v`` is
    ignored.
    """
    params.validate_for(structure)
    x = _check_x(structure, x)
    if not 0 <= v < structure.vertex_count:
        raise ValidationError(f"vertex {v} out of range")
    y = np.asarray(y).reshape(-1)
    if y.shape[0] != structure.vertex_count:
        raise ValidationError("configuration length does not match the vertex count")
    linear = 0.0
    for h in range(structure.slot_count):
        xh = 1.0 if h == 0 else float(x[h - 1])
        term = params.main[v, h]
        for u in structure.neighbors(v, h):
            term += params.edge_weight(u, v, h) * float(y[u])
        linear += xh * term
    return float(expit(linear))


def gibbs_sample(
    structure: DynamicIsingStructure,
    params: IsingParameters,
    covariates: Sequence[Sequence[float]] | np.ndarray,
    burn_in: int = DEFAULT_BURN_IN,
    thinning: int = 1,
    seed: int | Sequence[int] = 0,
    block_rows: int | None = None,
) -> BinaryDataset:
    """Draw one configuration per covariate row by systematic-scan Gibbs.

    Each row runs its own chain from an independent Bernoulli(1/2) start,
    using a dedicated random stream derived from (seed, row index); output
    is therefore reproducible and independent of ``block_rows``, which only
    controls how many chains advance together per vectorized step.  A chain
    performs ``burn_in`` full sweeps (vertices in index order) that are
    discarded, then ``thinning`` further sweeps, and emits the final state.
    """
    params.validate_for(structure)
    if burn_in < 0:
        raise ValidationError("burn_in must be >= 0")
    if thinning < 1:
        raise ValidationError("thinning must be >= 1")
    covs = np.asarray(covariates, dtype=np.float64)
    if covs.ndim == 1:
        covs = covs.reshape(-1, 1)
    if covs.ndim != 2 or covs.shape[1] != structure.covariate_count:
        raise ValidationError(
            f"covariates must be (n, {structure.covariate_count}), got {covs.shape}"
        )
    seed_prefix = (int(seed),) if isinstance(seed, (int, np.integer)) else tuple(
        int(s) for s in seed
    )

    p = structure.vertex_count
    slots = structure.slot_count
    n = covs.shape[0]
    sweeps = burn_in + thinning
    draws = p * (sweeps + 1)

    # Per-slot neighbor index/weight views, precomputed once.
    nbrs: list[list[tuple[np.ndarray, np.ndarray]]] = []
    for v in range(p):
        per_slot = []
        for h in range(slots):
            us = structure.neighbors(v, h)
            ws = np.array([params.edge_weight(u, v, h) for u in us])
            per_slot.append((np.array(us, dtype=np.intp), ws))
        nbrs.append(per_slot)

    if block_rows is None:
        block_rows = max(64, _GIBBS_BLOCK_BUDGET // max(draws, 1))
    block_rows = max(1, min(block_rows, max(n, 1)))

    out = np.empty((n, p), dtype=np.int8)
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        b = stop - start
        uniforms = np.empty((b, draws))
        for r in range(b):
            rng = np.random.default_rng(seed_prefix + (start + r,))
            uniforms[r] = rng.random(draws)
        xp = _powers(covs[start:stop])  # (b, slots)
        base = xp @ params.main.T  # (b, p)
        y = (uniforms[:, :p] < 0.5).astype(np.float64)
        col = p
        for _ in range(sweeps):
            for v in range(p):
                linear = base[:, v].copy()
                for h in range(slots):
                    idx, w = nbrs[v][h]
                    if idx.size:
                        linear += xp[:, h] * (y[:, idx] @ w)
                y[:, v] = uniforms[:, col] < expit(linear)
                col += 1
        out[start:stop] = y.astype(np.int8)
    return BinaryDataset(out, covs)


def vertex_design_matrix(
    structure: DynamicIsingStructure, data: BinaryDataset, v: int
) -> np.ndarray:
    """Design rows (x^h for all h, then x^h * y_u slot-major, neighbors ascending)."""
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
    xp = _powers(data.covariates)
    cols = [xp[:, h] for h in range(structure.slot_count)]
    resp = data.responses.astype(np.float64)
    for h in range(structure.slot_count):
        for u in structure.neighbors(v, h):
            cols.append(xp[:, h] * resp[:, u])
    return np.column_stack(cols) if cols else np.zeros((data.n, 0))


def vertex_pseudo_loglik(
    structure: DynamicIsingStructure,
    params_v: Sequence[float],
    data: BinaryDataset,
    v: int,
) -> float:
    """Conditional log-likelihood of vertex ``v`` at the given coefficients."""
    design = vertex_design_matrix(structure, data, v)
    beta = np.asarray(params_v, dtype=np.float64).reshape(-1)
    if beta.shape[0] != design.shape[1]:
        raise ValidationError(
            f"coefficient vector has length {beta.shape[0]}, "
            f"design has {design.shape[1]} columns"
        )
    response = data.responses[:, v].astype(np.float64)
    linear = design @ beta
    return float((design.T @ response) @ beta - np.logaddexp(0.0, linear).sum())


@dataclass(frozen=True)
class _LogisticFit:
    beta: np.ndarray
    log_likelihood: float
    converged: bool
    iterations: int
    score_sup_norm: float
    separated: bool


def _newton_logistic(
    design: np.ndarray,
    response: np.ndarray,
    max_iterations: int = 100,
    gradient_tolerance: float = 1e-8,
    step_halving_limit: int = 30,
    warm_start: np.ndarray | None = None,
) -> _LogisticFit:
    """Damped Newton for a Bernoulli log-likelihood with logit link.

    The linear predictor of the accepted point is carried between iterations
    so each step costs one weighted cross-product plus line-search
    evaluations.
    """
    n, dim = design.shape
    t = design.T @ response
    beta = np.zeros(dim) if warm_start is None else warm_start.astype(np.float64).copy()

    def evaluate(b: np.ndarray) -> tuple[float, np.ndarray]:
        lp = design @ b
        return float(t @ b - np.logaddexp(0.0, lp).sum()), lp

    current, linear = evaluate(beta)
    separated = False
    converged = False
    iterations = 0
    probs = expit(linear)
    grad = t - design.T @ probs
    sup = float(np.abs(grad).max()) if dim else 0.0

    for iterations in range(1, max_iterations + 1):
        if sup <= gradient_tolerance:
            converged = True
            iterations -= 1
            break
        if np.abs(beta).max() > SEPARATION_CAP:
            separated = True
            beta = np.clip(beta, -SEPARATION_CAP, SEPARATION_CAP)
            break
        weights = probs * (1.0 - probs)
        neg_hess = design.T @ (design * weights[:, None])
        try:
            direction = np.linalg.solve(neg_hess, grad)
        except np.linalg.LinAlgError:
            direction = np.linalg.solve(neg_hess + 1e-8 * np.eye(dim), grad)
        step = 1.0
        accepted = False
        slack = 1e-12 * max(1.0, abs(current))
        for _ in range(step_halving_limit + 1):
            candidate = beta + step * direction
            cand_ll, cand_lp = evaluate(candidate)
            if math.isfinite(cand_ll) and cand_ll >= current - slack:
                beta, current, linear = candidate, cand_ll, cand_lp
                accepted = True
                break
            step /= 2.0
        if not accepted:
            break
        probs = expit(linear)
        grad = t - design.T @ probs
        sup = float(np.abs(grad).max()) if dim else 0.0

    if not converged and not separated and sup <= gradient_tolerance:
        converged = True
    if separated:
        current, linear = evaluate(beta)
        grad = t - design.T @ expit(linear)
        sup = float(np.abs(grad).max()) if dim else 0.0
    return _LogisticFit(
        beta=beta,
        log_likelihood=current,
        converged=converged,
        iterations=iterations,
        score_sup_norm=sup,
        separated=separated,
    )


def fit_vertex(
    structure: DynamicIsingStructure,
    data: BinaryDataset,
    v: int,
    max_iterations: int = 100,
    gradient_tolerance: float = 1e-8,
) -> VertexFit:
    """Newton logistic fit of one vertex's conditional likelihood."""
    design = vertex_design_matrix(structure, data, v)
    if data.n <= design.shape[1]:
        warnings.warn(
            f"vertex {v}: {data.n} rows for {design.shape[1]} design columns"
        )
    degenerate = tuple(
        int(c)
        for c in range(1, design.shape[1])
        if data.n and np.ptp(design[:, c]) == 0.0
    )
    fit = _newton_logistic(
        design,
        data.responses[:, v].astype(np.float64),
        max_iterations=max_iterations,
        gradient_tolerance=gradient_tolerance,
    )
    return VertexFit(
        vertex=v,
        neighborhoods=tuple(
            structure.neighbors(v, h) for h in range(structure.slot_count)
        ),
        coefficients=fit.beta,
        log_pseudo_likelihood=fit.log_likelihood,
        converged=fit.converged,
        iterations=fit.iterations,
        score_sup_norm=fit.score_sup_norm,
        separated=fit.separated or bool(degenerate),
        degenerate_columns=degenerate,
    )


def fit_pseudo(
    structure: DynamicIsingStructure,
    data: BinaryDataset,
    max_iterations: int = 100,
    gradient_tolerance: float = 1e-8,
) -> tuple[IsingParameters, dict[int, VertexFit]]:
    """Fit every vertex independently and average the two edge estimates."""
    fits = {
        v: fit_vertex(structure, data, v, max_iterations, gradient_tolerance)
        for v in range(structure.vertex_count)
    }
    p, slots = structure.vertex_count, structure.slot_count
    main = np.zeros((p, slots))
    for v, fit in fits.items():
        for h in range(slots):
            main[v, h] = fit.intercept(h)
    edge = []
    for h in range(slots):
        weights = {}
        for u, v in structure.edge_sets[h]:
            weights[(u, v)] = 0.5 * (
                fits[u].edge_coefficient(v, h) + fits[v].edge_coefficient(u, h)
            )
        edge.append(weights)
    return IsingParameters(main, tuple(edge)), fits


def relative_mse(estimate: Sequence[float], truth: Sequence[float]) -> float:
    """Squared error norm of the estimate relative to the squared truth norm."""
    est = np.asarray(estimate, dtype=np.float64).reshape(-1)
    tru = np.asarray(truth, dtype=np.float64).reshape(-1)
    if est.shape != tru.shape:
        raise ValidationError(
            f"vectors have different lengths: {est.shape[0]} vs {tru.shape[0]}"
        )
    denom = float(tru @ tru)
    if denom == 0.0:
        raise ValidationError("relative MSE is undefined for a zero truth vector")
    err = est - tru
    return float(err @ err) / denom
