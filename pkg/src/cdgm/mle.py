"""Analytic score, Hessian, and damped Newton maximum likelihood.

Works on the exact (full cell enumeration) path, so it is intended for
low-dimensional models.  The per-observation sums collapse over repeated
covariate values, which makes block-designed simulation studies cheap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .loglinear import (
    ModelSpec,
    ObservationSet,
    ParameterSet,
    _unique_covariate_rows,
    cell_probabilities,
    sufficient_statistics,
)

RIDGE = 1e-8


@dataclass(frozen=True)
class FitOptions:
    """Newton solver controls."""

    max_iterations: int = 100
    gradient_tolerance: float = 1e-8
    step_halving_limit: int = 30
    initial: ParameterSet | None = None

    def __post_init__(self) -> None:
        if self.gradient_tolerance <= 0:
            raise ValidationError("gradient_tolerance must be positive")
        if self.max_iterations < 1 or self.step_halving_limit < 1:
            raise ValidationError("iteration limits must be >= 1")


@dataclass(frozen=True)
class FitResult:
    """Maximizer plus convergence diagnostics and the observed information."""

    spec: ModelSpec
    theta: ParameterSet
    converged: bool
    iterations: int
    score_sup_norm: float
    observed_information: np.ndarray
    log_likelihood: float
    messages: tuple[str, ...] = ()


def marginal_prob(
    spec: ModelSpec, theta: ParameterSet, x, j, h: int
) -> float:
    """Covariate-weighted mass of the left-of event of interaction cell j.

    Equals x^h * sum over cells i with j left of i of p(i | x); this is the
    expected per-observation contribution to the slot-h sufficient statistic.
    """
    probs = cell_probabilities(spec, theta, x)
    pos = spec.index_sets[h].position(j)
    col = spec.design_matrix(h)[:, pos]
    xh = 1.0 if h == 0 else float(np.asarray(x, dtype=np.float64).reshape(-1)[h - 1])
    return xh * float(col @ probs)


def marginal_prob_pair(
    spec: ModelSpec, theta: ParameterSet, x, j, h: int, k, h2: int
) -> float:
    """Joint version of :func:`marginal_prob` for two interaction cells."""
    probs = cell_probabilities(spec, theta, x)
    xv = np.asarray(x, dtype=np.float64).reshape(-1)
    col_j = spec.design_matrix(h)[:, spec.index_sets[h].position(j)]
    col_k = spec.design_matrix(h2)[:, spec.index_sets[h2].position(k)]
    xh = 1.0 if h == 0 else float(xv[h - 1])
    xh2 = 1.0 if h2 == 0 else float(xv[h2 - 1])
    return xh * xh2 * float((col_j * col_k) @ probs)


class _Workspace:
    """Precomputed groupings for repeated evaluations on one dataset.

    The per-observation sums only depend on covariates through the unique
    rows and their counts, so likelihood, score, and Hessian reduce to a few
    matrix products over a (unique rows) x (cells) probability table.
    """

    def __init__(self, spec: ModelSpec, data: ObservationSet):
        self.spec = spec
        self.stats = sufficient_statistics(spec, data)
        uniq, counts = _unique_covariate_rows(data.covariates)
        self.counts = counts.astype(np.float64)
        self.powers = np.hstack([np.ones((uniq.shape[0], 1)), uniq])
        self.designs = [
            spec.design_matrix(h) for h in range(spec.covariate_count + 1)
        ]
        self.slots = spec.covariate_count + 1

    def _log_weights(self, theta: ParameterSet) -> np.ndarray:
        z = np.zeros((self.powers.shape[0], self.spec.levels.cell_count))
        for h, block in enumerate(theta.blocks):
            if block.shape[0]:
                z += np.outer(self.powers[:, h], self.designs[h] @ block)
        return z

    def probabilities(self, theta: ParameterSet) -> np.ndarray:
        """Row u holds the cell probabilities at the u-th unique covariate row."""
        z = self._log_weights(theta)
        z -= z.max(axis=1, keepdims=True)
        np.exp(z, out=z)
        z /= z.sum(axis=1, keepdims=True)
        return z

    def log_likelihood(self, theta: ParameterSet) -> float:
        linear = sum(float(b @ t) for b, t in zip(theta.blocks, self.stats))
        if not self.counts.size:
            return linear
        z = self._log_weights(theta)
        peak = z.max(axis=1)
        lse = peak + np.log(np.exp(z - peak[:, None]).sum(axis=1))
        return linear - float(self.counts @ lse)

    def score(self, theta: ParameterSet) -> np.ndarray:
        if not self.counts.size:
            return np.concatenate(self.stats) if self.stats else np.zeros(0)
        probs = self.probabilities(theta)
        parts = []
        for h in range(self.slots):
            if not self.spec.block_dims[h]:
                parts.append(self.stats[h])
                continue
            weights = self.counts * self.powers[:, h]
            parts.append(self.stats[h] - self.designs[h].T @ (probs.T @ weights))
        return np.concatenate(parts)

    def hessian(self, theta: ParameterSet) -> np.ndarray:
        dim = self.spec.total_dim
        out = np.zeros((dim, dim))
        if not self.counts.size:
            return out
        probs = self.probabilities(theta)
        offsets = np.concatenate([[0], np.cumsum(self.spec.block_dims)])
        means = [
            probs @ self.designs[h] if self.spec.block_dims[h] else None
            for h in range(self.slots)
        ]
        for h in range(self.slots):
            if not self.spec.block_dims[h]:
                continue
            for h2 in range(h, self.slots):
                if not self.spec.block_dims[h2]:
                    continue
                weights = self.counts * self.powers[:, h] * self.powers[:, h2]
                cell_mass = probs.T @ weights
                cross = (self.designs[h] * cell_mass[:, None]).T @ self.designs[h2]
                outer = means[h].T @ (weights[:, None] * means[h2])
                block = -(cross - outer)
                r0, r1 = offsets[h], offsets[h + 1]
                c0, c1 = offsets[h2], offsets[h2 + 1]
                out[r0:r1, c0:c1] += block
                if h2 != h:
                    out[c0:c1, r0:r1] += block.T
        return (out + out.T) / 2.0


def score(spec: ModelSpec, theta: ParameterSet, data: ObservationSet) -> np.ndarray:
    """Gradient of the log-likelihood, slot blocks concatenated in order."""
    theta.validate_for(spec)
    return _Workspace(spec, data).score(theta)


def hessian(spec: ModelSpec, theta: ParameterSet, data: ObservationSet) -> np.ndarray:
    """Second derivative matrix of the log-likelihood; symmetric, NSD."""
    theta.validate_for(spec)
    return _Workspace(spec, data).hessian(theta)


def _solve_ascent(hess: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, bool]:
    """Newton direction -H^{-1} g, with a ridge fallback on singular H."""
    neg = -hess
    try:
        step = np.linalg.solve(neg, grad)
        if np.all(np.isfinite(step)):
            return step, False
    except np.linalg.LinAlgError:
        pass
    dim = neg.shape[0]
    step = np.linalg.solve(neg + RIDGE * np.eye(dim), grad)
    return step, True


def newton_fit(
    spec: ModelSpec, data: ObservationSet, options: FitOptions | None = None
) -> FitResult:
    """Damped Newton ascent of the joint log-likelihood.

    The step is halved until the log-likelihood does not decrease; iteration
    stops when the score sup-norm falls below tolerance or the iteration
    budget runs out.  Diagnostics are returned either way.
    """
    options = options or FitOptions()
    if data.n == 0:
        raise ValidationError("cannot fit an empty observation set")
    messages: list[str] = []

    workspace = _Workspace(spec, data)
    base_labels = spec.parameter_labels()[: spec.block_dims[0]]
    for value, label in zip(workspace.stats[0], base_labels):
        if value == 0 or value == data.n:
            msg = f"sufficient statistic at {label} equals {int(value)} of n={data.n}; estimate may diverge"
            warnings.warn(msg)
            messages.append(msg)
    theta = options.initial if options.initial is not None else ParameterSet.zeros(spec)
    theta.validate_for(spec)
    current = workspace.log_likelihood(theta)
    if not math.isfinite(current):
        raise NumericalError(
            f"log-likelihood is not finite at the starting point ({current})"
        )

    flat = theta.flat()
    iterations = 0
    converged = False
    grad = workspace.score(theta)
    sup = float(np.abs(grad).max()) if grad.size else 0.0

    for iterations in range(1, options.max_iterations + 1):
        if sup <= options.gradient_tolerance:
            converged = True
            iterations -= 1
            break
        hess = workspace.hessian(theta)
        direction, ridged = _solve_ascent(hess, grad)
        if ridged:
            messages.append(
                f"iteration {iterations}: singular Hessian, ridge {RIDGE} applied"
            )
        step = 1.0
        accepted = False
        # "does not decrease" is judged up to float rounding of the total
        slack = 1e-12 * max(1.0, abs(current))
        for _ in range(options.step_halving_limit + 1):
            candidate = flat + step * direction
            cand_theta = ParameterSet.from_flat(spec, candidate)
            cand_ll = workspace.log_likelihood(cand_theta)
            if math.isfinite(cand_ll) and cand_ll >= current - slack:
                flat, theta, current = candidate, cand_theta, cand_ll
                accepted = True
                break
            step /= 2.0
        if not accepted:
            messages.append(
                f"iteration {iterations}: no ascent step found after "
                f"{options.step_halving_limit} halvings"
            )
            break
        grad = workspace.score(theta)
        sup = float(np.abs(grad).max()) if grad.size else 0.0

    if not converged and sup <= options.gradient_tolerance:
        converged = True

    info = -workspace.hessian(theta)
    return FitResult(
        spec=spec,
        theta=theta,
        converged=converged,
        iterations=iterations,
        score_sup_norm=sup,
        observed_information=info,
        log_likelihood=current,
        messages=tuple(messages),
    )
