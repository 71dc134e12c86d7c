"""Independent reference implementations used to check the library.

Everything here recomputes quantities from first principles (direct
enumeration, naive exponentials, finite differences, quadrature) without
going through the code paths under test.
"""

import itertools
import math

import numpy as np
from scipy.integrate import quad


# ---------------------------------------------------------------------------
# Log-linear model, by direct enumeration


def naive_support(cell):
    return {v for v, level in enumerate(cell) if level != 0}


def naive_left_of(j, i):
    sj = naive_support(j)
    return sj <= naive_support(i) and all(j[v] == i[v] for v in sj)


def naive_cells(levels):
    return list(itertools.product(*(range(k) for k in levels)))


def naive_cell_weights(spec, theta, x):
    """Unnormalized cell weights, exponentiated term by term (no shifting)."""
    x = list(x)
    powers = [1.0] + [float(v) for v in x]
    weights = []
    for cell in naive_cells(spec.levels.levels):
        w = 1.0
        for h in range(spec.covariate_count + 1):
            for pos, j in enumerate(spec.slot_cells(h)):
                if naive_left_of(j, cell):
                    w *= math.exp(powers[h] * float(theta.blocks[h][pos]))
        weights.append(w)
    return np.array(weights)


def naive_cell_probabilities(spec, theta, x):
    w = naive_cell_weights(spec, theta, x)
    return w / w.sum()


def naive_log_likelihood(spec, theta, data):
    """Per-observation sum of log cell probabilities."""
    total = 0.0
    cells = naive_cells(spec.levels.levels)
    index = {c: k for k, c in enumerate(cells)}
    for m in range(data.n):
        probs = naive_cell_probabilities(spec, theta, data.covariates[m])
        total += math.log(probs[index[tuple(data.cells[m])]])
    return total


def multinomial_log_pmf(counts, probs):
    counts = np.asarray(counts)
    log_coeff = math.lgamma(counts.sum() + 1) - sum(
        math.lgamma(c + 1) for c in counts
    )
    mask = counts > 0
    return log_coeff + float(counts[mask] @ np.log(probs[mask]))


# ---------------------------------------------------------------------------
# Finite differences


def fd_gradient(fn, x, step=1e-5):
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for k in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[k] += step
        lo[k] -= step
        grad[k] = (fn(hi) - fn(lo)) / (2.0 * step)
    return grad


def fd_jacobian(fn, x, step=1e-5):
    x = np.asarray(x, dtype=np.float64)
    base = np.asarray(fn(x))
    jac = np.zeros((base.size, x.size))
    for k in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[k] += step
        lo[k] -= step
        jac[:, k] = (np.asarray(fn(hi)) - np.asarray(fn(lo))) / (2.0 * step)
    return jac


# ---------------------------------------------------------------------------
# Dynamic Ising model, by 2^p enumeration


def ising_configurations(p):
    return list(itertools.product((0, 1), repeat=p))


def ising_log_weight(structure, params, y, x):
    powers = [1.0] + [float(v) for v in x]
    total = 0.0
    for h in range(structure.slot_count):
        for v in range(structure.vertex_count):
            total += powers[h] * params.main[v, h] * y[v]
        for (u, v) in structure.edge_sets[h]:
            total += powers[h] * params.edge[h][(u, v)] * y[u] * y[v]
    return total


def ising_joint_probs(structure, params, x):
    """Exact joint pmf over all 2^p configurations."""
    configs = ising_configurations(structure.vertex_count)
    weights = np.array(
        [math.exp(ising_log_weight(structure, params, y, x)) for y in configs]
    )
    return configs, weights / weights.sum()


def ising_conditional_from_joint(structure, params, y, x, v):
    """P(y_v = 1 | rest) as a ratio of joint pmf sums."""
    y1 = list(y)
    y1[v] = 1
    y0 = list(y)
    y0[v] = 0
    w1 = math.exp(ising_log_weight(structure, params, y1, x))
    w0 = math.exp(ising_log_weight(structure, params, y0, x))
    return w1 / (w0 + w1)


# ---------------------------------------------------------------------------
# Chi-square tail, by adaptive quadrature


def chi2_tail_by_quadrature(x, df):
    norm = 2.0 ** (df / 2.0) * math.gamma(df / 2.0)

    def density(t):
        return math.exp(-t / 2.0) * t ** (df / 2.0 - 1.0) / norm

    value, _err = quad(density, x, np.inf, limit=200)
    return value


# ---------------------------------------------------------------------------
# Random model generators for property checks


def random_model_spec(rng, max_p=4, max_h=2, max_levels=3):
    """Random level space and per-slot generating classes (maximal sets)."""
    from cdgm.loglinear import ModelSpec

    p = int(rng.integers(1, max_p + 1))
    levels = [int(rng.integers(2, max_levels + 1)) for _ in range(p)]
    h_count = int(rng.integers(0, max_h + 1))
    slot_sets = []
    for _ in range(h_count + 1):
        sets = [[v] for v in range(p) if rng.random() < 0.9]
        if not sets:
            sets = [[int(rng.integers(0, p))]]
        for u in range(p):
            for v in range(u + 1, p):
                if rng.random() < 0.4:
                    sets.append([u, v])
        if p >= 3 and rng.random() < 0.3:
            triple = sorted(rng.choice(p, size=3, replace=False).tolist())
            sets.append(triple)
        slot_sets.append(sets)
    return ModelSpec.from_maximal_sets(levels, slot_sets)


def random_ising_model(rng, p, slot_count, edge_prob=0.5, scale=1.0):
    """Random dynamic Ising structure and parameters."""
    from cdgm.ising import DynamicIsingStructure, IsingParameters

    edge_sets = []
    for _ in range(slot_count):
        edges = {
            (u, v)
            for u in range(p)
            for v in range(u + 1, p)
            if rng.random() < edge_prob
        }
        edge_sets.append(frozenset(edges))
    structure = DynamicIsingStructure(p, tuple(edge_sets))
    main = scale * rng.standard_normal((p, slot_count))
    edge = tuple(
        {pair: float(scale * rng.standard_normal()) for pair in sorted(edges)}
        for edges in edge_sets
    )
    return structure, IsingParameters(main, edge)


def random_observations(rng, spec, n):
    """Observations drawn from a random parameter vector of the model."""
    from cdgm.loglinear import ObservationSet, ParameterSet, cell_probabilities

    theta = ParameterSet.from_flat(spec, 0.5 * rng.standard_normal(spec.total_dim))
    covs = rng.random((n, spec.covariate_count))
    all_cells = spec.levels.cells()
    rows = np.zeros((n, spec.levels.vertex_count), dtype=np.int64)
    for m in range(n):
        probs = cell_probabilities(spec, theta, covs[m])
        rows[m] = all_cells[rng.choice(len(probs), p=probs)]
    return theta, ObservationSet(rows, covs)
