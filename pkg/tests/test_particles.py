import math

import numpy as np
import pytest

from chaoslab.kernels import DriftSpec, KernelSpec, zero_kernel
from chaoslab.meanfield import GridDensity, cosine_density, uniform_density
from chaoslab.particles import (
    ParticleConfig,
    SimParams,
    drift_field,
    em_step,
    evolve,
    replica_streams,
    sample_initial,
    simulate,
)


def sine_kernel(amplitude=1.0):
    return KernelSpec(family="smooth_trig", dim=1, amplitude=amplitude)


def test_sim_params_validation():
    k = sine_kernel()
    with pytest.raises(ValueError):
        SimParams(N=1, T=1.0, dt=0.1, seed=0, kernel=k)
    with pytest.raises(ValueError):
        SimParams(N=4, T=1.0, dt=0.0, seed=0, kernel=k)
    with pytest.raises(ValueError):
        SimParams(N=4, T=1.0, dt=0.3, seed=0, kernel=k)  # non-integer step count
    vals = np.ones(32)
    vals[0] = 0.0
    rho = GridDensity(vals / vals.mean())
    with pytest.raises(ValueError):
        SimParams(N=4, T=1.0, dt=0.1, seed=0, kernel=k, rho0=rho)


def test_sample_uniform_mean():
    # empirical mean of 1e6 uniform draws within a 3 sigma band of 1/2
    cfg = sample_initial(uniform_density(64, 1), 10**6, 123)
    sigma = math.sqrt(1 / 12) / 1000
    assert abs(cfg.positions.mean() - 0.5) < 3 * sigma


def test_sample_inverse_cdf_ks_test():
    # d=1 draws from 1 + 0.5 cos(2 pi x) vs the exact CDF x + sin(2 pi x)/(4 pi)
    n_draws = 10**5
    cfg = sample_initial(cosine_density(256, 1, 0.5), n_draws, 99)
    x = np.sort(cfg.positions[:, 0])
    cdf = x + np.sin(2 * np.pi * x) / (4 * np.pi)
    ranks = np.arange(1, n_draws + 1) / n_draws
    ks = max(np.max(np.abs(cdf - ranks)), np.max(np.abs(cdf - ranks + 1 / n_draws)))
    assert ks < 1.63 / math.sqrt(n_draws)  # 1% critical value


def test_sample_deterministic_given_seed():
    rho = cosine_density(128, 1, 0.3)
    a = sample_initial(rho, 50, 7)
    b = sample_initial(rho, 50, 7)
    np.testing.assert_array_equal(a.positions, b.positions)


def test_sample_2d_rejection_matches_density():
    # chi-square on 4x4 blocks of a separable cosine density
    rho = cosine_density(64, 2, 0.5)
    n_draws = 200000
    cfg = sample_initial(rho, n_draws, 11)
    bins = 4
    idx = (cfg.positions * bins).astype(int)
    counts = np.bincount(idx[:, 0] * bins + idx[:, 1], minlength=16)
    from chaoslab.entropy import bin_density

    expected = bin_density(rho, bins).ravel() * n_draws
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 37.7  # chi2_{15} at the 0.1% level


def test_drift_zero_kernel_zero_drift():
    cfg = ParticleConfig(np.random.default_rng(0).random((8, 2)))
    np.testing.assert_array_equal(drift_field(cfg, zero_kernel(2)), 0.0)


def test_drift_two_particle_hand_value():
    cfg = ParticleConfig(np.array([[0.0], [0.25]]))
    b = drift_field(cfg, sine_kernel())
    np.testing.assert_allclose(b.ravel(), [-0.5, 0.5], atol=1e-15)


def test_drift_interaction_momentum_cancels():
    # odd kernel: the pairwise contributions cancel in the particle sum
    rng = np.random.default_rng(4)
    cfg = ParticleConfig(rng.random((65, 1)))
    b = drift_field(cfg, sine_kernel(2.5))
    assert abs(math.fsum(b[:, 0])) < 1e-13
    drift = DriftSpec(kind="gradient", amplitude=0.7)
    b2 = drift_field(cfg, sine_kernel(2.5), drift)
    from chaoslab.kernels import eval_drift

    f = eval_drift(drift, cfg.positions, 1)
    assert abs(math.fsum((b2 - f)[:, 0])) < 1e-13


def test_em_step_identity_and_translation():
    cfg = ParticleConfig(np.array([[0.1], [0.6], [0.9]]))
    out = em_step(cfg, zero_kernel(1), None, 0.05, None)
    np.testing.assert_array_equal(out.positions, cfg.positions)
    assert out.time == pytest.approx(0.05)
    const = lambda x: np.full_like(x, 3.0)
    out = em_step(cfg, zero_kernel(1), const, 0.05, None)
    np.testing.assert_allclose(
        out.positions, (cfg.positions + 0.15) % 1.0, atol=1e-12
    )


def test_em_increment_second_moment():
    # zero drift: E|dx|^2 = 2 d dt, averaged over 1e5 particle-steps
    rng = np.random.default_rng(21)
    dt, n_particles, n_steps = 1e-3, 1000, 100
    total = []
    cfg = ParticleConfig(rng.random((n_particles, 1)))
    for _ in range(n_steps):
        new = em_step(cfg, zero_kernel(1), None, dt, rng)
        delta = new.positions - cfg.positions
        delta = (delta + 0.5) % 1.0 - 0.5
        total.append(np.sum(delta**2))
        cfg = new
    m = n_particles * n_steps
    mean = sum(total) / m
    sigma = 2 * dt * math.sqrt(2.0 / m)
    assert abs(mean - 2 * dt) < 3 * sigma


def test_evolve_fast_path_matches_reference():
    rho0 = cosine_density(256, 1, 0.5)
    _, seqs = replica_streams(3, 24, 0)
    x0 = sample_initial(rho0, 24, 5).positions
    noise = np.stack(
        [np.random.default_rng(s).standard_normal((20, 1)) for s in seqs], axis=1
    )
    drift = DriftSpec(kind="gradient", amplitude=0.8, mode=2)
    fast = evolve(x0, noise, sine_kernel(1.3), drift, 1e-3)
    cfg = ParticleConfig(x0)
    for s in range(20):
        cfg = em_step(cfg, sine_kernel(1.3), drift, 1e-3, noise[s])
    np.testing.assert_allclose(fast, cfg.positions, atol=1e-12)


def test_evolve_spectral_path_matches_reference_2d():
    k = KernelSpec(family="biot_savart_2d", dim=2, m_trunc=6)
    rng = np.random.default_rng(8)
    x0 = rng.random((10, 2))
    noise = rng.standard_normal((8, 10, 2))
    fast = evolve(x0, noise, k, None, 5e-3)
    cfg = ParticleConfig(x0)
    for s in range(8):
        cfg = em_step(cfg, k, None, 5e-3, noise[s])
    np.testing.assert_allclose(fast, cfg.positions, atol=1e-11)


def test_permutation_equivariance():
    # permuting particles and their noise columns permutes the output
    rng = np.random.default_rng(13)
    x0 = rng.random((12, 1))
    noise = rng.standard_normal((15, 12, 1))
    perm = rng.permutation(12)
    out = evolve(x0, noise, sine_kernel(), None, 1e-3)
    out_p = evolve(x0[perm], noise[:, perm], sine_kernel(), None, 1e-3)
    np.testing.assert_allclose(out_p, out[perm], atol=1e-10)
    # exact for independent particles
    out0 = evolve(x0, noise, zero_kernel(1), None, 1e-3)
    out0_p = evolve(x0[perm], noise[:, perm], zero_kernel(1), None, 1e-3)
    np.testing.assert_array_equal(out0_p, out0[perm])


def test_simulate_trivial_single_step():
    rho0 = cosine_density(128, 1, 0.2)
    params = SimParams(N=6, T=0.01, dt=0.01, seed=42, kernel=zero_kernel(1), rho0=rho0)
    out = simulate(params)
    init, _ = replica_streams(42, 6, 0)
    start = sample_initial(rho0, 6, init)
    # zero kernel: only the noise moves particles; same streams reproduce it
    assert out.time == pytest.approx(0.01)
    assert out.positions.shape == (6, 1)
    assert not np.allclose(out.positions, start.positions)


def test_simulate_bit_reproducible():
    params = SimParams(
        N=32, T=0.05, dt=0.005, seed=77, kernel=sine_kernel(), rho0=cosine_density(256, 1, 0.5)
    )
    a = simulate(params, replica=3)
    b = simulate(params, replica=3)
    np.testing.assert_array_equal(a.positions, b.positions)
    c = simulate(params, replica=4)
    assert not np.array_equal(a.positions, c.positions)


def test_simulate_uniform_stays_uniform():
    # pure heat flow keeps the uniform one-particle law: chi-square on 16 bins
    params = SimParams(
        N=256, T=0.02, dt=0.002, seed=10, kernel=zero_kernel(1), rho0=uniform_density(64, 1)
    )
    counts = np.zeros(16)
    reps = 40  # 10240 samples
    for r in range(reps):
        out = simulate(params, replica=r)
        idx = (out.positions[:, 0] * 16).astype(int)
        counts += np.bincount(np.clip(idx, 0, 15), minlength=16)
    expected = 256 * reps / 16
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 39.3  # chi2_{15} at the 0.05% level (independence only approximate)
