"""Covariate-dependent discrete graphical models.

Exact likelihood machinery for low-dimensional log-linear models whose
parameters vary with covariates, pseudo-likelihood estimation for
high-dimensional dynamic Ising models, birth-death MCMC structure learning,
and a seeded simulation harness with CSV/figure reports.
"""

from .bdmcmc import (
    NeighborhoodScorer,
    NeighborhoodState,
    NeighborhoodTrace,
    SelectOptions,
    SelectionResult,
    bdmcmc_run,
    birth_death_rates,
    f1_score,
    inclusion_probabilities,
    neighborhood_score,
    threshold_and_combine,
)
from .errors import CapacityError, CdgmError, NumericalError, ValidationError
from .inference import (
    TestResult,
    asymptotic_covariance,
    chi_square_upper_tail,
    homogeneity_test,
    lrt,
    wald_test,
)
from .ising import (
    BinaryDataset,
    DynamicIsingStructure,
    IsingParameters,
    VertexFit,
    conditional_prob,
    fit_pseudo,
    fit_vertex,
    gibbs_sample,
    relative_mse,
    vertex_design_matrix,
    vertex_pseudo_loglik,
)
from .loglinear import (
    Cell,
    GeneratingClass,
    InteractionIndexSet,
    LevelSpace,
    ModelSpec,
    ObservationSet,
    ParameterSet,
    cell_log_weights,
    cell_probabilities,
    design_vector,
    left_of,
    log_likelihood,
    sufficient_statistics,
    support,
)
from .mle import (
    FitOptions,
    FitResult,
    hessian,
    marginal_prob,
    marginal_prob_pair,
    newton_fit,
    score,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryDataset",
    "CapacityError",
    "CdgmError",
    "Cell",
    "DynamicIsingStructure",
    "FitOptions",
    "FitResult",
    "GeneratingClass",
    "InteractionIndexSet",
    "IsingParameters",
    "LevelSpace",
    "ModelSpec",
    "NeighborhoodScorer",
    "NeighborhoodState",
    "NeighborhoodTrace",
    "NumericalError",
    "ObservationSet",
    "ParameterSet",
    "SelectOptions",
    "SelectionResult",
    "TestResult",
    "ValidationError",
    "VertexFit",
    "asymptotic_covariance",
    "bdmcmc_run",
    "birth_death_rates",
    "cell_log_weights",
    "cell_probabilities",
    "chi_square_upper_tail",
    "conditional_prob",
    "design_vector",
    "f1_score",
    "fit_pseudo",
    "fit_vertex",
    "gibbs_sample",
    "hessian",
    "homogeneity_test",
    "inclusion_probabilities",
    "left_of",
    "log_likelihood",
    "lrt",
    "marginal_prob",
    "marginal_prob_pair",
    "neighborhood_score",
    "newton_fit",
    "relative_mse",
    "score",
    "sufficient_statistics",
    "support",
    "threshold_and_combine",
    "vertex_design_matrix",
    "vertex_pseudo_loglik",
    "wald_test",
]
