import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cdgm.errors import ValidationError
from cdgm.loglinear import (
    ModelSpec,
    ObservationSet,
    ParameterSet,
    log_likelihood,
)
from cdgm.mle import (
    FitOptions,
    hessian,
    marginal_prob,
    marginal_prob_pair,
    newton_fit,
    score,
)

import oracles

TWO_VERTEX = ModelSpec.from_maximal_sets([2, 2], [[(0, 1)]])
TWO_SLOT = ModelSpec.from_maximal_sets([2, 2], [[(0, 1)], [(0, 1)]])


def random_point(rng, spec, scale=0.5):
    theta = ParameterSet.from_flat(spec, scale * rng.standard_normal(spec.total_dim))
    _t, data = oracles.random_observations(rng, spec, int(rng.integers(10, 40)))
    return theta, data


class TestMarginalProb:
    def test_uniform_single_support(self):
        theta = ParameterSet.zeros(TWO_VERTEX)
        assert marginal_prob(TWO_VERTEX, theta, [], (1, 0), 0) == pytest.approx(0.5)
        assert marginal_prob(TWO_VERTEX, theta, [], (1, 1), 0) == pytest.approx(0.25)

    def test_uniform_slope_slot(self):
        theta = ParameterSet.zeros(TWO_SLOT)
        value = marginal_prob(TWO_SLOT, theta, [0.5], (1, 0), 1)
        assert value == pytest.approx(0.25)

    def test_definition_oracle(self):
        rng = np.random.default_rng(20)
        for _ in range(10):
            spec = oracles.random_model_spec(rng, max_p=3)
            theta = ParameterSet.from_flat(spec, rng.standard_normal(spec.total_dim))
            x = rng.random(spec.covariate_count)
            h = int(rng.integers(0, spec.covariate_count + 1))
            if not spec.block_dims[h]:
                continue
            j = spec.slot_cells(h)[int(rng.integers(0, spec.block_dims[h]))]
            naive = oracles.naive_cell_probabilities(spec, theta, x)
            xh = 1.0 if h == 0 else x[h - 1]
            mass = sum(
                p
                for cell, p in zip(oracles.naive_cells(spec.levels.levels), naive)
                if oracles.naive_left_of(j, cell)
            )
            assert marginal_prob(spec, theta, x, j, h) == pytest.approx(
                xh * mass, rel=1e-10
            )


class TestMarginalProbPair:
    def test_diagonal_reduction(self):
        rng = np.random.default_rng(21)
        theta = ParameterSet.from_flat(TWO_SLOT, rng.standard_normal(6))
        x = [0.7]
        j = (1, 0)
        pair = marginal_prob_pair(TWO_SLOT, theta, x, j, 1, j, 1)
        single = marginal_prob(TWO_SLOT, theta, x, j, 1)
        assert pair == pytest.approx(x[0] * single, rel=1e-12)

    def test_uniform_disjoint_supports(self):
        theta = ParameterSet.zeros(TWO_VERTEX)
        value = marginal_prob_pair(TWO_VERTEX, theta, [], (1, 0), 0, (0, 1), 0)
        assert value == pytest.approx(0.25)

    def test_symmetry(self):
        rng = np.random.default_rng(22)
        theta = ParameterSet.from_flat(TWO_SLOT, rng.standard_normal(6))
        x = [0.3]
        a = marginal_prob_pair(TWO_SLOT, theta, x, (1, 0), 0, (1, 1), 1)
        b = marginal_prob_pair(TWO_SLOT, theta, x, (1, 1), 1, (1, 0), 0)
        assert a == b


class TestScore:
    def test_single_observation_value(self):
        data = ObservationSet.create([[1, 1]], [[]])
        vec = score(TWO_VERTEX, ParameterSet.zeros(TWO_VERTEX), data)
        assert_allclose(vec, [0.5, 0.5, 0.75])

    def test_finite_difference_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(12):
            spec = oracles.random_model_spec(rng, max_p=3, max_h=2)
            theta, data = random_point(rng, spec)
            analytic = score(spec, theta, data)
            numeric = oracles.fd_gradient(
                lambda t: log_likelihood(
                    spec, ParameterSet.from_flat(spec, t), data
                ),
                theta.flat(),
            )
            assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6)

    def test_zero_at_maximum(self):
        rng = np.random.default_rng(24)
        _theta, data = oracles.random_observations(rng, TWO_SLOT, 200)
        fit = newton_fit(TWO_SLOT, data)
        assert fit.converged
        assert np.abs(score(TWO_SLOT, fit.theta, data)).max() <= 1e-8


class TestHessian:
    def test_empty_data_zero_matrix(self):
        empty = ObservationSet(np.zeros((0, 2), dtype=np.int64), np.zeros((0, 0)))
        mat = hessian(TWO_VERTEX, ParameterSet.zeros(TWO_VERTEX), empty)
        assert_allclose(mat, np.zeros((3, 3)))

    def test_finite_difference_of_score(self):
        rng = np.random.default_rng(25)
        for _ in range(8):
            spec = oracles.random_model_spec(rng, max_p=3, max_h=1)
            theta, data = random_point(rng, spec)
            analytic = hessian(spec, theta, data)
            numeric = oracles.fd_jacobian(
                lambda t: score(spec, ParameterSet.from_flat(spec, t), data),
                theta.flat(),
            )
            assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-5)

    def test_symmetry_and_concavity(self):
        rng = np.random.default_rng(26)
        for _ in range(100):
            spec = oracles.random_model_spec(rng, max_p=3, max_h=1)
            theta, data = random_point(rng, spec, scale=1.0)
            mat = hessian(spec, theta, data)
            assert_allclose(mat, mat.T, atol=1e-12)
            if mat.size:
                assert np.linalg.eigvalsh(mat).max() <= 1e-10


class TestNewtonFit:
    def test_balanced_coin(self):
        spec = ModelSpec.from_maximal_sets([2], [[(0,)]])
        data = ObservationSet.create([[1]] * 50 + [[0]] * 50, [[]] * 100)
        fit = newton_fit(spec, data)
        assert fit.converged
        assert fit.theta.flat()[0] == pytest.approx(0.0, abs=1e-9)

    def test_log_odds_closed_form(self):
        spec = ModelSpec.from_maximal_sets([2], [[(0,)]])
        data = ObservationSet.create([[1]] * 73 + [[0]] * 27, [[]] * 100)
        fit = newton_fit(spec, data)
        assert fit.theta.flat()[0] == pytest.approx(math.log(73 / 27), abs=1e-9)
        assert fit.log_likelihood == pytest.approx(
            73 * math.log(0.73) + 27 * math.log(0.27), abs=1e-9
        )

    def test_monotone_log_likelihood(self):
        rng = np.random.default_rng(27)
        _theta, data = oracles.random_observations(rng, TWO_SLOT, 300)
        lls = []
        theta = ParameterSet.zeros(TWO_SLOT)
        # re-run the fit while recording the trajectory through small budgets
        for k in range(1, 7):
            fit = newton_fit(TWO_SLOT, data, FitOptions(max_iterations=k))
            lls.append(fit.log_likelihood)
        assert all(b >= a - 1e-12 for a, b in zip(lls, lls[1:]))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(28)
        _theta, data = oracles.random_observations(rng, TWO_SLOT, 120)
        perm = rng.permutation(data.n)
        shuffled = ObservationSet(data.cells[perm], data.covariates[perm])
        fit_a = newton_fit(TWO_SLOT, data)
        fit_b = newton_fit(TWO_SLOT, shuffled)
        assert np.array_equal(fit_a.theta.flat(), fit_b.theta.flat())
        assert fit_a.log_likelihood == fit_b.log_likelihood

    def test_duplication_doubles_score_and_hessian(self):
        rng = np.random.default_rng(29)
        theta, data = random_point(rng, TWO_SLOT)
        doubled = ObservationSet(
            np.vstack([data.cells, data.cells]),
            np.vstack([data.covariates, data.covariates]),
        )
        assert np.array_equal(
            score(TWO_SLOT, theta, doubled), 2.0 * score(TWO_SLOT, theta, data)
        )
        assert np.array_equal(
            hessian(TWO_SLOT, theta, doubled), 2.0 * hessian(TWO_SLOT, theta, data)
        )

    def test_divergence_warning_on_empty_cell_count(self):
        spec = ModelSpec.from_maximal_sets([2], [[(0,)]])
        data = ObservationSet.create([[1]] * 10, [[]] * 10)
        with pytest.warns(UserWarning, match="may diverge"):
            fit = newton_fit(spec, data, FitOptions(max_iterations=5))
        assert not fit.converged

    def test_empty_data_rejected(self):
        empty = ObservationSet(np.zeros((0, 2), dtype=np.int64), np.zeros((0, 1)))
        with pytest.raises(ValidationError):
            newton_fit(TWO_SLOT, empty)

    def test_consistency_larger_n_wins(self):
        # paired replications: the error at n=40000 beats n=2500 nearly always
        rng = np.random.default_rng(30)
        spec = TWO_SLOT
        wins = 0
        reps = 100
        values = np.linspace(0.05, 0.95, 10)
        for rep in range(reps):
            truth = ParameterSet.from_flat(spec, rng.standard_normal(spec.total_dim))
            errors = {}
            for n in (2500, 40000):
                cells = []
                covs = []
                from cdgm.loglinear import cell_probabilities

                all_cells = spec.levels.cells()
                for value in values:
                    probs = cell_probabilities(spec, truth, [value])
                    draws = rng.multinomial(n // len(values), probs)
                    cells.append(np.repeat(all_cells, draws, axis=0))
                    covs.append(np.full((n // len(values), 1), value))
                data = ObservationSet(np.vstack(cells), np.vstack(covs))
                fit = newton_fit(spec, data)
                errors[n] = np.linalg.norm(fit.theta.flat() - truth.flat())
            if errors[40000] < errors[2500]:
                wins += 1
        assert wins >= 95
