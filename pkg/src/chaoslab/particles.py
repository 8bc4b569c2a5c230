"""Euler-Maruyama simulation of the weakly interacting particle system.

N particles on the periodic unit box follow

    dX^i = ( F(X^i) + (1/N) sum_{j != i} K(X^i - X^j) ) dt + sqrt(2) dW^i,

with i.i.d. initial positions drawn from a grid density.  ``drift_field`` is
the literal O(N^2) pairwise evaluation; ``simulate`` steps through an exact
per-mode factorization of the same sum (every built-in kernel is a finite
Fourier sum), compiled with numba for the d=1 single-sine case.  A test pins
the fast paths against the pairwise reference.

Randomness: replica r of a run derives its streams from
SeedSequence([seed, N, r]); the initial draw and each particle's noise
increments live on their own substreams, so replicas (and particles) can be
generated in any order or in parallel without changing a single bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .kernels import (
    DriftSpec,
    KernelSpec,
    drift_single_sine_form,
    eval_drift,
    eval_kernel,
    kernel_modes,
    single_sine_form,
)
from .meanfield import GridDensity
from .torus import min_displacement, wrap

# families whose kernels are odd, K(-z) = -K(z); their pairwise contributions
# are computed once per (i, j) pair and applied with opposite signs
_ODD_FAMILIES = {"zero", "smooth_trig", "biot_savart_2d", "gradient_of_potential"}


@dataclass
class ParticleConfig:
    """Positions of the N particles at a given time, wrapped into [0,1)^d."""

    positions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] < 2 or p.shape[1] not in (1, 2):
            raise ValueError("positions must be (N, d) with N >= 2 and d in {1, 2}")
        self.positions = wrap(p)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class SimParams:
    """Full description of one simulation run."""

    N: int
    T: float
    dt: float
    seed: int
    kernel: KernelSpec
    drift: DriftSpec | None = None
    rho0: GridDensity | None = None  # None means uniform

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if not (0 < self.dt <= self.T):
            raise ValueError("need 0 < dt <= T")
        steps = round(self.T / self.dt)
        if steps < 1 or abs(steps * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError("T/dt must round to an integer step count")
        if self.rho0 is not None:
            if self.rho0.dim != self.kernel.dim:
                raise ValueError("rho0 dimension does not match the kernel")
            if float(np.min(self.rho0.values)) <= 0:
                raise ValueError("initial density must be bounded away from 0")

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def dim(self) -> int:
        return self.kernel.dim


def sample_initial(rho0: GridDensity, N: int, rng) -> ParticleConfig:
    """Draw N i.i.d. points from a grid density.

    d=1 inverts the piecewise-linear CDF of the grid; d=2 uses rejection
    against sup rho0.  ``rng`` is a seed or a numpy Generator; the draw is
    reproducible given either.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if float(np.mean(rho0.values)) <= 0:
        raise ValueError("density must have positive mass")
    n = rho0.n
    if rho0.dim == 1:
        u = rng.random(N)
        cum = np.concatenate([[0.0], np.cumsum(rho0.values) / n])
        cum[-1] = 1.0
        i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, n - 1)
        dens = np.maximum(rho0.values[i], 1e-300)
        x = (i + (u - cum[i]) * n / dens) / n
        return ParticleConfig(wrap(x[:, None]))
    sup = float(np.max(rho0.values))
    out = np.empty((N, 2))
    filled = 0
    while filled < N:
        batch = max(128, 2 * (N - filled))
        cand = rng.random((batch, 2))
        h = rng.random(batch) * sup
        ij = (cand * n).astype(int)
        accept = h <= rho0.values[ij[:, 0], ij[:, 1]]
        take = min(int(np.count_nonzero(accept)), N - filled)
        out[filled : filled + take] = cand[accept][:take]
        filled += take
    return ParticleConfig(out)


def drift_field(config: ParticleConfig, kernel: KernelSpec, drift=None) -> np.ndarray:
    """Per-particle drift b^i = F(x^i) + (1/N) sum_{j != i} K(x^i - x^j).

    Pairwise O(N^2) evaluation; odd kernels evaluate each unordered pair once
    and scatter it with opposite signs, so the interaction part of
    sum_i b^i cancels exactly (not just to round-off).
    """
    x = config.positions
    N, d = x.shape
    b = eval_drift(drift, x, d).reshape(N, d).copy()
    if kernel.family == "zero":
        return b
    if kernel.family in _ODD_FAMILIES:
        iu, ju = np.triu_indices(N, k=1)
        vals = eval_kernel(kernel, min_displacement(x[iu], x[ju]))
        vals = vals.reshape(len(iu), d)
        acc = np.zeros_like(b)
        np.add.at(acc, iu, vals)
        np.subtract.at(acc, ju, vals)
        b += acc / N
    else:
        disp = min_displacement(x[:, None, :], x[None, :, :])
        vals = eval_kernel(kernel, disp.reshape(-1, d)).reshape(N, N, d)
        vals[np.arange(N), np.arange(N)] = 0.0
        b += vals.sum(axis=1) / N
    return b


def em_step(
    config: ParticleConfig, kernel: KernelSpec, drift, dt: float, noise
) -> ParticleConfig:
    """One explicit Euler-Maruyama step.

    ``noise`` is a numpy Generator (standard normals drawn per particle), an
    (N, d) array of prescribed increments, or None for the zero-noise test hook.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = config.positions
    if noise is None:
        xi = np.zeros_like(x)
    elif isinstance(noise, np.random.Generator):
        xi = noise.standard_normal(x.shape)
    else:
        xi = np.asarray(noise, dtype=float).reshape(x.shape)
    b = drift_field(config, kernel, drift)
    new = wrap(x + b * dt + math.sqrt(2.0 * dt) * xi)
    return ParticleConfig(new, time=config.time + dt)


# ---------------------------------------------------------------------------
# Fast exact stepping used by simulate()
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _evolve_sine_1d(x0, noise, dt, amp, mode, famp, fmode):  # pragma: no cover
    N = x0.shape[0]
    steps = noise.shape[0]
    x = x0.copy()
    root = math.sqrt(2.0 * dt)
    wk = 2.0 * math.pi * mode
    wf = 2.0 * math.pi * fmode
    for s in range(steps):
        S = 0.0
        C = 0.0
        for i in range(N):
            S += math.sin(wk * x[i])
            C += math.cos(wk * x[i])
        for i in range(N):
            si = math.sin(wk * x[i])
            ci = math.cos(wk * x[i])
            # sum_j sin(w(x_i - x_j)) = si*C - ci*S; the j = i term is 0
            b = amp * (si * C - ci * S) / N + famp * math.sin(wf * x[i])
            xn = x[i] + b * dt + root * noise[s, i]
            x[i] = xn - math.floor(xn)
    return x


def _interaction_drift_spectral(x: np.ndarray, modes, coeffs) -> np.ndarray:
    """(1/N) sum_j K(x_i - x_j) for a finite-Fourier kernel, O(N * modes)."""
    N = x.shape[0]
    if not len(modes):
        return np.zeros_like(x)
    phase = np.exp(2j * np.pi * (x @ modes.T.astype(float)))  # e^{2 pi i k.x_i}
    sums = phase.conj().sum(axis=0)  # sum_j e^{-2 pi i k.x_j}
    k0 = coeffs.sum(axis=0)  # K(0), removes the j = i term
    return ((phase * sums[None, :]) @ coeffs - k0[None, :]).real / N


def evolve(
    positions: np.ndarray,
    noise: np.ndarray,
    kernel: KernelSpec,
    drift,
    dt: float,
) -> np.ndarray:
    """Run len(noise) EM steps from ``positions`` with prescribed increments.

    ``noise`` has shape (steps, N, d); entry [s, i] is particle i's standard
    normal increment at step s.  Deterministic, and equivariant under a joint
    permutation of particles and noise columns.
    """
    x = np.array(positions, dtype=float)
    steps = noise.shape[0]
    d = x.shape[1]
    sine = single_sine_form(kernel)
    fsine = drift_single_sine_form(drift)
    if d == 1 and sine is not None and fsine is not None:
        amp, mode = sine
        famp, fmode = fsine
        out = _evolve_sine_1d(
            x[:, 0].copy(),
            np.ascontiguousarray(noise[:, :, 0]),
            dt,
            amp,
            float(mode),
            famp,
            float(fmode),
        )
        return out[:, None]
    modes, coeffs = kernel_modes(kernel)
    root = math.sqrt(2.0 * dt)
    for s in range(steps):
        b = _interaction_drift_spectral(x, modes, coeffs)
        b += eval_drift(drift, x, d).reshape(x.shape)
        x = wrap(x + b * dt + root * noise[s])
    return x


def replica_streams(seed: int, N: int, replica: int):
    """(init generator, per-particle noise SeedSequences) for one replica."""
    root = np.random.SeedSequence([int(seed), int(N), int(replica)])
    init_ss, noise_ss = root.spawn(2)
    return np.random.default_rng(init_ss), noise_ss.spawn(N)


def _noise_array(noise_seqs, n_steps: int, d: int) -> np.ndarray:
    noise = np.empty((n_steps, len(noise_seqs), d))
    for i, ss in enumerate(noise_seqs):
        noise[:, i, :] = np.random.default_rng(ss).standard_normal((n_steps, d))
    return noise


def simulate(params: SimParams, replica: int = 0) -> ParticleConfig:
    """Simulate one replica to time T; bit-reproducible in (params, replica)."""
    from .meanfield import uniform_density

    rho0 = params.rho0 if params.rho0 is not None else uniform_density(256, params.dim)
    init_rng, noise_seqs = replica_streams(params.seed, params.N, replica)
    config = sample_initial(rho0, params.N, init_rng)
    noise = _noise_array(noise_seqs, params.n_steps, params.dim)
    final = evolve(config.positions, noise, params.kernel, params.drift, params.dt)
    return ParticleConfig(final, time=params.T)
