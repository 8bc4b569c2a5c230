import math

import numpy as np
import pytest

from chaoslab.meanfield import GridDensity, cosine_density, uniform_density
from chaoslab.metrics import (
    EmpiricalMeasure,
    RateQuery,
    rate_a_p,
    wasserstein_1d,
    wasserstein_exact_small,
    wasserstein_sinkhorn,
)
from chaoslab.torus import torus_distance


def test_rate_branch_examples():
    assert rate_a_p(RateQuery(p=1, d=1, epsilon=0.1)) == pytest.approx(0.01, abs=1e-15)
    mid = rate_a_p(RateQuery(p=1, d=2, epsilon=0.1))
    assert mid == pytest.approx(0.01 / math.log(12.0) ** 2, abs=1e-15)
    assert rate_a_p(RateQuery(p=1, d=3, epsilon=0.1)) == pytest.approx(1e-3, abs=1e-15)


def test_rate_validation():
    with pytest.raises(ValueError):
        rate_a_p(RateQuery(p=1, d=1, epsilon=0.0))
    with pytest.raises(ValueError):
        rate_a_p(RateQuery(p=0.5, d=1, epsilon=0.1))


def test_rate_monotone_in_epsilon_all_branches():
    eps = np.linspace(1e-3, 0.5, 60)
    for p, d in [(1.0, 1), (1.0, 2), (1.0, 3), (1.5, 3), (2.0, 4)]:
        vals = [rate_a_p(RateQuery(p=p, d=d, epsilon=e)) for e in eps]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_rate_scaling_below_critical():
    # for p < d/2 the rate is epsilon^d exactly
    for eps in (0.05, 0.1, 0.2):
        ratio = rate_a_p(RateQuery(p=1, d=3, epsilon=2 * eps)) / rate_a_p(
            RateQuery(p=1, d=3, epsilon=eps)
        )
        assert ratio == pytest.approx(2**3, rel=1e-12)


def test_w1_trivial_cases():
    mu = EmpiricalMeasure(np.array([0.1, 0.4, 0.7]))
    assert wasserstein_1d(mu, mu, 1.0) == pytest.approx(0.0, abs=1e-12)
    a = EmpiricalMeasure(np.array([0.0]))
    b = EmpiricalMeasure(np.array([0.25]))
    for p in (1.0, 1.5, 2.0):
        assert wasserstein_1d(a, b, p) == pytest.approx(0.25, abs=1e-12)


def test_w1_wraparound_shorter_than_direct():
    a = EmpiricalMeasure(np.array([0.05]))
    b = EmpiricalMeasure(np.array([0.95]))
    assert wasserstein_1d(a, b, 1.0) == pytest.approx(0.1, abs=1e-12)


def test_w1_atoms_vs_own_grid_rendering():
    atoms = np.array([0.1, 0.9])
    vals = np.zeros(1024)
    vals[(atoms * 1024).astype(int)] = 512.0
    grid = GridDensity(vals)
    d = wasserstein_1d(EmpiricalMeasure(atoms), grid, 1.0)
    assert d < 2e-3


def test_w1_requires_dim_1():
    mu = EmpiricalMeasure(np.random.default_rng(0).random((4, 2)))
    with pytest.raises(ValueError):
        wasserstein_1d(mu, uniform_density(16, 2), 1.0)


def test_circle_ot_matches_hungarian_oracle():
    rng = np.random.default_rng(42)
    for p in (1.0, 1.5, 2.0):
        for _ in range(100):
            mu = EmpiricalMeasure(rng.random(16))
            nu = EmpiricalMeasure(rng.random(16))
            assert wasserstein_1d(mu, nu, p) == pytest.approx(
                wasserstein_exact_small(mu, nu, p), abs=1e-9
            )


def test_circle_ot_grid_path_matches_atomization():
    # the quantile-rotation path against a fine equal-count atomization
    rng = np.random.default_rng(17)
    nu = cosine_density(64, 1, amplitude=0.5)
    cum = np.concatenate([[0.0], np.cumsum(nu.values) / nu.n])
    K = 2048
    u = (np.arange(K) + 0.5) / K
    i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, nu.n - 1)
    quantile_atoms = (i + (u - cum[i]) * nu.n / nu.values[i]) / nu.n
    for p in (1.0, 2.0):
        mu_atoms = rng.random(8)
        mu = EmpiricalMeasure(mu_atoms)
        approx = wasserstein_1d(
            EmpiricalMeasure(np.repeat(mu_atoms, K // 8)),
            EmpiricalMeasure(quantile_atoms),
            p,
        )
        exact = wasserstein_1d(mu, nu, p)
        assert exact == pytest.approx(approx, abs=5e-3)


def test_exact_small_validation_and_examples():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError):
        wasserstein_exact_small(
            EmpiricalMeasure(rng.random(4)), EmpiricalMeasure(rng.random(5))
        )
    a = EmpiricalMeasure(np.array([[0.0, 0.0], [0.5, 0.5]]))
    b = EmpiricalMeasure(np.array([[0.5, 0.5], [0.0, 0.0]]))
    assert wasserstein_exact_small(a, b, 2.0) == 0.0
    assert wasserstein_exact_small(a, a, 1.0) == 0.0


def test_exact_small_metric_properties():
    rng = np.random.default_rng(11)
    for _ in range(30):
        x, y, z = (EmpiricalMeasure(rng.random((6, 2))) for _ in range(3))
        dxy = wasserstein_exact_small(x, y, 2.0)
        dyx = wasserstein_exact_small(y, x, 2.0)
        assert dxy == pytest.approx(dyx, abs=1e-12)
        dxz = wasserstein_exact_small(x, z, 2.0)
        dzy = wasserstein_exact_small(z, y, 2.0)
        assert dxy <= dxz + dzy + 1e-9


def _pooled_nn_reg(X, Y):
    P = np.vstack([X, Y])
    D = torus_distance(P[:, None, :], P[None, :, :]) + np.eye(len(P))
    return 0.5 * float(np.mean(np.min(D, axis=1))) ** 2


def test_sinkhorn_close_to_assignment_oracle():
    rng = np.random.default_rng(7)
    rels = []
    for _ in range(50):
        X, Y = rng.random((8, 2)), rng.random((8, 2))
        mu, nu = EmpiricalMeasure(X), EmpiricalMeasure(Y)
        s = wasserstein_sinkhorn(mu, nu, p=2.0, reg=_pooled_nn_reg(X, Y))
        e = wasserstein_exact_small(mu, nu, p=2.0)
        rels.append(abs(s - e) / e)
    assert max(rels) < 0.05


def test_sinkhorn_reg_refinement_moves_toward_exact():
    rng = np.random.default_rng(19)
    X, Y = rng.random((8, 2)), rng.random((8, 2))
    mu, nu = EmpiricalMeasure(X), EmpiricalMeasure(Y)
    exact = wasserstein_exact_small(mu, nu, 2.0)
    base = 0.005
    gaps = [
        abs(wasserstein_sinkhorn(mu, nu, 2.0, reg=f * base) - exact)
        for f in (4, 2, 1)
    ]
    assert gaps[0] >= gaps[1] >= gaps[2] - 1e-12


def test_sinkhorn_self_discretization_small():
    g = uniform_density(16, 2)
    mu = EmpiricalMeasure(g.grid_points())
    val = wasserstein_sinkhorn(mu, g, p=2.0, reg=0.01)
    assert val < 3.0 / 16.0


def test_sinkhorn_rejects_bad_reg():
    mu = EmpiricalMeasure(np.random.default_rng(0).random((4, 2)))
    with pytest.raises(ValueError):
        wasserstein_sinkhorn(mu, mu, 2.0, reg=0.0)
