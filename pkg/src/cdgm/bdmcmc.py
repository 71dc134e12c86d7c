"""Birth-death MCMC over per-vertex neighborhood models.

The sampler is a continuous-time Markov process on the set of possible
neighborhoods of one vertex, where each neighborhood term is a (neighbor,
slot) pair.  Births add a term, deaths remove one; jump rates are posterior
ratios approximated through BIC or extended-BIC scores of the vertex's
conditional (logistic) likelihood.  Holding times, the reciprocals of total
jump rates, weight the visited states for Bayesian model averaging.  The
per-vertex results are thresholded and combined into global edge sets with
the AND and OR rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .ising import BinaryDataset, _newton_logistic, _powers

Term = tuple[int, int]  # (neighbor vertex, covariate slot)

# Score differences are clamped here before exponentiation.
_EXP_CLAMP = 700.0


@dataclass(frozen=True)
class SelectOptions:
    """Controls for one selection run."""

    criterion: str = "bic"  # "bic" | "ebic"
    omega: float = 0.0
    iterations: int = 5000
    burn_in: int | None = None  # defaults to 20% of iterations
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.criterion not in ("bic", "ebic"):
            raise ValidationError(f"unknown criterion {self.criterion!r}")
        if self.omega < 0:
            raise ValidationError("omega must be >= 0")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.resolved_burn_in >= self.iterations:
            raise ValidationError("burn-in must be smaller than iterations")
        # Thresholds above 1 are allowed and simply select nothing.
        if self.threshold <= 0:
            raise ValidationError("threshold must be positive")

    @property
    def resolved_burn_in(self) -> int:
        if self.burn_in is not None:
            if self.burn_in < 0:
                raise ValidationError("burn-in must be >= 0")
            return self.burn_in
        return self.iterations // 5


@dataclass(frozen=True)
class NeighborhoodState:
    """A vertex plus its included (neighbor, slot) terms."""

    vertex: int
    terms: frozenset[Term]

    def __post_init__(self) -> None:
        terms = frozenset((int(u), int(h)) for u, h in self.terms)
        object.__setattr__(self, "terms", terms)
        if any(u == self.vertex for u, _ in terms):
            raise ValidationError(f"state of vertex {self.vertex} contains itself")


@dataclass(frozen=True)
class TraceEntry:
    terms: frozenset[Term]
    holding_time: float
    score: float


@dataclass(frozen=True)
class NeighborhoodTrace:
    """BDMCMC sample path for one vertex."""

    vertex: int
    candidates: tuple[Term, ...]
    entries: tuple[TraceEntry, ...]
    separation_flagged: bool = False

    @property
    def total_time(self) -> float:
        return sum(e.holding_time for e in self.entries)


@dataclass(frozen=True)
class SelectionResult:
    """Per-vertex inclusion probabilities and the combined global graphs."""

    vertex_count: int
    slot_count: int
    threshold: float
    probabilities: dict[int, dict[Term, float]]
    neighborhoods: dict[int, frozenset[Term]]
    edges_and: tuple[frozenset[tuple[int, int]], ...]
    edges_or: tuple[frozenset[tuple[int, int]], ...]
    separation_flags: dict[int, bool] = field(default_factory=dict)


class NeighborhoodScorer:
    """Cached BIC/EBIC scores of candidate neighborhoods of one vertex.

    Scores are log p(y_v | y_state, x) approximations: the maximized
    conditional log-likelihood minus half the complexity penalty.  Identical
    states always return the identical cached value.  Fits can be
    warm-started from the cached fit of an adjacent state.
    """

    def __init__(
        self,
        data: BinaryDataset,
        vertex: int,
        criterion: str = "bic",
        omega: float = 0.0,
    ):
        if criterion not in ("bic", "ebic"):
            raise ValidationError(f"unknown criterion {criterion!r}")
        if not 0 <= vertex < data.vertex_count:
            raise ValidationError(f"vertex {vertex} out of range")
        if data.n == 0:
            raise ValidationError("cannot score neighborhoods on an empty dataset")
        self.data = data
        self.vertex = vertex
        self.criterion = criterion
        self.omega = float(omega)
        self.slot_count = data.covariate_count + 1
        self.candidates: tuple[Term, ...] = tuple(
            (u, h)
            for h in range(self.slot_count)
            for u in range(data.vertex_count)
            if u != vertex
        )
        self._intercepts = _powers(data.covariates)
        self._response = data.responses[:, vertex].astype(np.float64)
        self._columns: dict[Term, np.ndarray] = {}
        self._cache: dict[frozenset[Term], tuple[float, np.ndarray, bool]] = {}
        self._log_n = math.log(data.n)
        self._log_p = math.log(data.vertex_count)

    def _column(self, term: Term) -> np.ndarray:
        col = self._columns.get(term)
        if col is None:
            u, h = term
            col = self._intercepts[:, h] * self.data.responses[:, u]
            self._columns[term] = col
        return col

    def _design(self, terms: Sequence[Term]) -> np.ndarray:
        cols = [self._intercepts]
        cols.extend(self._column(t)[:, None] for t in terms)
        return np.hstack(cols)

    def _penalty(self, size: int) -> float:
        value = 0.5 * size * self._log_n
        if self.criterion == "ebic":
            value += self.omega * size * self._log_p
        return value

    def score(
        self, terms: frozenset[Term], warm_from: frozenset[Term] | None = None
    ) -> float:
        return self.score_details(terms, warm_from)[0]

    def score_details(
        self, terms: frozenset[Term], warm_from: frozenset[Term] | None = None
    ) -> tuple[float, np.ndarray, bool]:
        cached = self._cache.get(terms)
        if cached is not None:
            return cached
        ordered = sorted(terms, key=lambda t: (t[1], t[0]))
        for t in ordered:
            u, h = t
            if not (0 <= u < self.data.vertex_count) or u == self.vertex:
                raise ValidationError(f"invalid neighbor {u} for vertex {self.vertex}")
            if not 0 <= h < self.slot_count:
                raise ValidationError(f"slot {h} out of range")
        warm = None
        if warm_from is not None:
            parent = self._cache.get(warm_from)
            if parent is not None:
                parent_ordered = sorted(warm_from, key=lambda t: (t[1], t[0]))
                lookup = dict(zip(parent_ordered, parent[1][self.slot_count :]))
                warm = np.concatenate(
                    [
                        parent[1][: self.slot_count],
                        np.array([lookup.get(t, 0.0) for t in ordered]),
                    ]
                )
        fit = _newton_logistic(self._design(ordered), self._response, warm_start=warm)
        value = fit.log_likelihood - self._penalty(len(terms))
        result = (value, fit.beta, fit.separated)
        self._cache[terms] = result
        return result


def neighborhood_score(
    data: BinaryDataset,
    vertex: int,
    terms: Iterable[Term],
    criterion: str = "bic",
    omega: float = 0.0,
) -> float:
    """Approximate log p(y_v | y_terms, x) as -BIC/2 (or -EBIC/2)."""
    scorer = NeighborhoodScorer(data, vertex, criterion, omega)
    return scorer.score(frozenset(terms))


def _rates(
    scorer: NeighborhoodScorer, terms: frozenset[Term]
) -> tuple[list[Term], np.ndarray]:
    base = scorer.score(terms)
    moves = []
    rates = np.empty(len(scorer.candidates))
    for k, pair in enumerate(scorer.candidates):
        other = terms ^ {pair}
        diff = scorer.score(other, warm_from=terms) - base
        diff = min(max(diff, -_EXP_CLAMP), _EXP_CLAMP)
        rates[k] = min(math.exp(diff), 1.0)
        moves.append(pair)
    return moves, rates


def birth_death_rates(
    data: BinaryDataset,
    vertex: int,
    terms: Iterable[Term],
    criterion: str = "bic",
    omega: float = 0.0,
) -> dict[Term, float]:
    """Birth rate for each absent (u, h) pair, death rate for each present one.

    Rates are min(posterior ratio, 1) under the uniform neighborhood prior,
    so every rate lies in (0, 1].
    """
    scorer = NeighborhoodScorer(data, vertex, criterion, omega)
    moves, rates = _rates(scorer, frozenset(terms))
    return dict(zip(moves, rates))


def bdmcmc_run(
    data: BinaryDataset, vertex: int, options: SelectOptions | None = None
) -> NeighborhoodTrace:
    """Simulate the birth-death chain of one vertex's neighborhood.

    Starts from the empty neighborhood.  Each step records the current state
    with its holding time (reciprocal of the total jump rate), then jumps to
    a move drawn with probability proportional to its rate.  Deterministic
    given the options' seed: the stream is derived from (seed, vertex).
    """
    options = options or SelectOptions()
    if data.vertex_count < 2:
        raise ValidationError("selection needs at least two vertices")
    scorer = NeighborhoodScorer(data, vertex, options.criterion, options.omega)
    rng = np.random.default_rng((int(options.seed), int(vertex)))
    terms: frozenset[Term] = frozenset()
    entries: list[TraceEntry] = []
    for _ in range(options.iterations):
        moves, rates = _rates(scorer, terms)
        total = float(rates.sum())
        if not math.isfinite(total) or total <= 0.0:
            raise NumericalError(
                f"vertex {vertex}: total jump rate {total} is degenerate"
            )
        entries.append(TraceEntry(terms, 1.0 / total, scorer.score(terms)))
        pick = np.searchsorted(np.cumsum(rates), rng.random() * total, side="right")
        pick = min(int(pick), len(moves) - 1)
        terms = terms ^ {moves[pick]}
    flagged = any(sep for _, _, sep in scorer._cache.values())
    return NeighborhoodTrace(vertex, scorer.candidates, tuple(entries), flagged)


def inclusion_probabilities(
    trace: NeighborhoodTrace, burn_in: int
) -> dict[Term, float]:
    """Holding-time-weighted inclusion frequency of every candidate term."""
    if burn_in < 0:
        raise ValidationError("burn-in must be >= 0")
    kept = trace.entries[burn_in:]
    if not kept:
        raise ValidationError(
            f"trace with {len(trace.entries)} entries cannot drop {burn_in}"
        )
    weights = {pair: 0.0 for pair in trace.candidates}
    total = 0.0
    for entry in kept:
        total += entry.holding_time
        for pair in entry.terms:
            weights[pair] += entry.holding_time
    return {pair: w / total for pair, w in weights.items()}


def threshold_and_combine(
    probabilities: Mapping[int, Mapping[Term, float]],
    vertex_count: int,
    slot_count: int,
    threshold: float = 0.5,
) -> SelectionResult:
    """Threshold per-vertex probabilities and combine under both rules.

    A term enters a neighborhood when its probability is >= threshold
    (inclusive).  The AND rule keeps an edge when both incident
    neighborhoods selected it; the OR rule keeps it when either did.
    """
    missing = [v for v in range(vertex_count) if v not in probabilities]
    if missing:
        raise ValidationError(f"missing probabilities for vertices {missing}")
    neighborhoods = {
        v: frozenset(t for t, prob in probabilities[v].items() if prob >= threshold)
        for v in range(vertex_count)
    }
    edges_and = []
    edges_or = []
    for h in range(slot_count):
        picked_and = set()
        picked_or = set()
        for u in range(vertex_count):
            for v in range(u + 1, vertex_count):
                at_v = (u, h) in neighborhoods[v]
                at_u = (v, h) in neighborhoods[u]
                if at_v and at_u:
                    picked_and.add((u, v))
                if at_v or at_u:
                    picked_or.add((u, v))
        edges_and.append(frozenset(picked_and))
        edges_or.append(frozenset(picked_or))
    return SelectionResult(
        vertex_count=vertex_count,
        slot_count=slot_count,
        threshold=threshold,
        probabilities={v: dict(m) for v, m in probabilities.items()},
        neighborhoods=neighborhoods,
        edges_and=tuple(edges_and),
        edges_or=tuple(edges_or),
    )


def f1_score(
    estimated: Iterable[tuple[int, int]], truth: Iterable[tuple[int, int]]
) -> float:
    """F1 of edge recovery for one slot; two empty sets score 1."""
    est = {tuple(sorted((int(u), int(v)))) for u, v in estimated}
    tru = {tuple(sorted((int(u), int(v)))) for u, v in truth}
    tp = len(est & tru)
    fp = len(est - tru)
    fn = len(tru - est)
    if tp == fp == fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)
