"""Asymptotic standard errors, Wald tests, and likelihood-ratio tests."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaincc

from .errors import NumericalError, ValidationError
from .loglinear import ModelSpec, ObservationSet
from .mle import FitOptions, FitResult, newton_fit

# Negative LRT statistics larger than this in magnitude indicate a fit
# problem rather than solver slack.
LRT_SLACK = 1e-8


@dataclass(frozen=True)
class TestResult:
    statistic: float
    degrees_of_freedom: int
    p_value: float
    kind: str  # "wald" | "lrt"
    null_description: str


def chi_square_upper_tail(x: float, df: int) -> float:
    """P(chi-square with ``df`` degrees of freedom > x).

    Computed as the regularized upper incomplete gamma Q(df/2, x/2).  With
    df = 0 the distribution is a point mass at zero.
    """
    if not np.isfinite(x):
        raise ValidationError(f"test statistic must be finite, got {x}")
    if x < 0:
        raise ValidationError(f"test statistic must be nonnegative, got {x}")
    if df < 0:
        raise ValidationError(f"degrees of freedom must be nonnegative, got {df}")
    if df == 0:
        return 1.0 if x <= 0 else 0.0
    return float(gammaincc(df / 2.0, x / 2.0))


def asymptotic_covariance(fit: FitResult) -> np.ndarray:
    """Inverse observed information at the maximizer.

    Raises a numerical error naming the non-identified parameters when the
    information matrix is singular.
    """
    if not fit.converged:
        raise ValidationError("covariance requires a converged fit")
    info = fit.observed_information
    eigvals, eigvecs = np.linalg.eigh(info)
    tol = max(abs(eigvals).max(), 1.0) * 1e-12
    bad = np.nonzero(eigvals <= tol)[0]
    if bad.size:
        labels = fit.spec.parameter_labels()
        named: set[str] = set()
        for k in bad:
            vec = np.abs(eigvecs[:, k])
            named.update(
                labels[idx] for idx in np.nonzero(vec >= 0.3 * vec.max())[0]
            )
        raise NumericalError(
            "observed information is singular; non-identified parameters: "
            + ", ".join(sorted(named))
        )
    inv = (eigvecs / eigvals) @ eigvecs.T
    return (inv + inv.T) / 2.0


def wald_test(
    fit: FitResult,
    indices: Sequence[int],
    null_description: str | None = None,
) -> TestResult:
    """Wald test of H0: the selected parameters are all zero."""
    indices = list(dict.fromkeys(int(i) for i in indices))
    dim = fit.spec.total_dim
    if not indices:
        raise ValidationError("need at least one parameter index")
    if any(i < 0 or i >= dim for i in indices):
        raise ValidationError(f"parameter indices out of range [0, {dim})")
    cov = asymptotic_covariance(fit)
    sub = cov[np.ix_(indices, indices)]
    values = fit.theta.flat()[indices]
    try:
        solved = np.linalg.solve(sub, values)
    except np.linalg.LinAlgError:
        raise NumericalError("singular covariance block in Wald test") from None
    statistic = float(values @ solved)
    statistic = max(statistic, 0.0)
    df = len(indices)
    if null_description is None:
        labels = fit.spec.parameter_labels()
        null_description = "H0: " + " = ".join(labels[i] for i in indices) + " = 0"
    return TestResult(
        statistic=statistic,
        degrees_of_freedom=df,
        p_value=chi_square_upper_tail(statistic, df),
        kind="wald",
        null_description=null_description,
    )


def homogeneity_test(fit: FitResult) -> TestResult:
    """Wald test of equal slope blocks across all covariates.

    H0: theta_1 = ... = theta_H, tested through the contrast differences
    theta_h - theta_{h+1}.  All slope slots must share the same interaction
    cells so the contrasts are coordinate-wise meaningful.
    """
    spec = fit.spec
    if spec.covariate_count < 2:
        raise ValidationError("homogeneity test needs at least two covariates")
    cells = spec.slot_cells(1)
    for h in range(2, spec.covariate_count + 1):
        if spec.slot_cells(h) != cells:
            raise ValidationError(
                "homogeneity test requires identical slope generating classes"
            )
    block = len(cells)
    dim = spec.total_dim
    offsets = np.concatenate([[0], np.cumsum(spec.block_dims)])
    rows = []
    for h in range(1, spec.covariate_count):
        for k in range(block):
            row = np.zeros(dim)
            row[offsets[h] + k] = 1.0
            row[offsets[h + 1] + k] = -1.0
            rows.append(row)
    contrast = np.vstack(rows)
    cov = asymptotic_covariance(fit)
    diff = contrast @ fit.theta.flat()
    middle = contrast @ cov @ contrast.T
    try:
        solved = np.linalg.solve(middle, diff)
    except np.linalg.LinAlgError:
        raise NumericalError("singular contrast covariance in homogeneity test") from None
    statistic = max(float(diff @ solved), 0.0)
    df = contrast.shape[0]
    return TestResult(
        statistic=statistic,
        degrees_of_freedom=df,
        p_value=chi_square_upper_tail(statistic, df),
        kind="wald",
        null_description="H0: all slope parameter blocks are equal",
    )


def _check_nested(spec_full: ModelSpec, spec_null: ModelSpec) -> int:
    if spec_full.levels != spec_null.levels:
        raise ValidationError("full and null models must share the level space")
    if spec_full.covariate_count != spec_null.covariate_count:
        raise ValidationError("full and null models must share the covariate count")
    for h in range(spec_full.covariate_count + 1):
        full_cells = set(spec_full.slot_cells(h))
        null_cells = set(spec_null.slot_cells(h))
        if not null_cells <= full_cells:
            raise ValidationError(
                f"null model is not nested in the full model at slot {h}"
            )
    return spec_full.total_dim - spec_null.total_dim


def lrt(
    spec_full: ModelSpec,
    spec_null: ModelSpec,
    data: ObservationSet,
    options: FitOptions | None = None,
) -> TestResult:
    """Likelihood-ratio test of a nested null model.

    The statistic 2(l_full - l_null) is chi-square with df equal to the
    parameter-count difference.  Tiny negative values from solver slack are
    clamped to zero with a warning.
    """
    df = _check_nested(spec_full, spec_null)
    fit_full = newton_fit(spec_full, data, options)
    fit_null = newton_fit(spec_null, data, options)
    for name, fit in (("full", fit_full), ("null", fit_null)):
        if not fit.converged:
            raise NumericalError(
                f"{name} model fit did not converge "
                f"(iterations={fit.iterations}, score sup-norm={fit.score_sup_norm:.3e})"
            )
    statistic = 2.0 * (fit_full.log_likelihood - fit_null.log_likelihood)
    if statistic < -LRT_SLACK:
        raise NumericalError(
            f"likelihood ratio statistic {statistic:.3e} is negative beyond "
            f"solver slack; fits are unreliable"
        )
    if statistic < 0.0:
        warnings.warn(
            f"clamping slightly negative LRT statistic {statistic:.3e} to 0"
        )
        statistic = 0.0
    return TestResult(
        statistic=statistic,
        degrees_of_freedom=df,
        p_value=chi_square_upper_tail(statistic, df),
        kind="lrt",
        null_description="H0: parameters outside the null model are zero",
    )
