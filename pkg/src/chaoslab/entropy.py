"""Relative entropy, Fisher information, and sample-based KL estimation.

Also contains a brute-force finite-space verifier for the variational identity

    -log mu(A) = inf { H(nu | mu) : nu(A) = 1 },

whose infimum is attained by mu conditioned on A.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .meanfield import GridDensity


@dataclass(frozen=True)
class FiniteMeasurePair:
    """Two probability vectors over the same finite index set."""

    weights_mu: np.ndarray
    weights_nu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.weights_mu, dtype=float)
        nu = np.asarray(self.weights_nu, dtype=float)
        object.__setattr__(self, "weights_mu", mu)
        object.__setattr__(self, "weights_nu", nu)
        if mu.shape != nu.shape or mu.ndim != 1:
            raise ValueError("weight vectors must be 1-d and of equal length")
        for name, w in (("mu", mu), ("nu", nu)):
            if np.any(w < 0):
                raise ValueError(f"weights_{name} has negative entries")
            if abs(float(w.sum()) - 1.0) > 1e-12:
                raise ValueError(f"weights_{name} does not sum to 1")


def relative_entropy(pair: FiniteMeasurePair) -> float:
    """H(mu|nu) = sum mu_i log(mu_i/nu_i), with +inf when mu is not
    absolutely continuous w.r.t. nu and the convention 0*log(0/q) = 0."""
    mu, nu = pair.weights_mu, pair.weights_nu
    pos = mu > 0
    if np.any(nu[pos] == 0):
        return math.inf
    return float(np.sum(mu[pos] * np.log(mu[pos] / nu[pos])))


def relative_entropy_grid(mu: GridDensity, nu: GridDensity) -> float:
    """Cell-quadrature relative entropy of two grid densities on the same grid.

    Against the uniform density this reduces to the quadrature of mu*log(mu).
    """
    if mu.values.shape != nu.values.shape:
        raise ValueError("grid shapes do not match")
    a, b = mu.values, nu.values
    pos = a > 0
    if np.any(b[pos] == 0):
        return math.inf
    terms = np.zeros_like(a)
    terms[pos] = a[pos] * np.log(a[pos] / b[pos])
    return float(np.mean(terms))


def fisher_information_grid(rho: GridDensity) -> float:
    """Quadrature of |grad rho|^2 / rho with a spectral gradient."""
    vals = rho.values
    if np.min(vals) <= 0:
        raise ValueError("Fisher information requires a strictly positive density")
    n, d = rho.n, rho.dim
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k = k.copy()
        k[n // 2] = 0.0  # unpaired Nyquist mode carries no usable derivative
    rho_hat = np.fft.fftn(vals)
    grad_sq = np.zeros_like(vals)
    for j in range(d):
        kj = k if d == 1 else (k[:, None] if j == 0 else k[None, :])
        dj = np.fft.ifftn(2j * np.pi * kj * rho_hat).real
        grad_sq = grad_sq + dj**2
    return float(np.mean(grad_sq / vals))


# ---------------------------------------------------------------------------
# Histogram KL estimator
# ---------------------------------------------------------------------------


def _bin_overlap_matrix(bins: int, n: int) -> np.ndarray:
    """(bins, n) matrix of interval overlap lengths between coarse bins and fine cells."""
    A = np.zeros((bins, n))
    for b in range(bins):
        lo_b, hi_b = b / bins, (b + 1) / bins
        i0 = int(np.floor(lo_b * n))
        i1 = min(int(np.ceil(hi_b * n)), n)
        for i in range(i0, i1):
            lo = max(lo_b, i / n)
            hi = min(hi_b, (i + 1) / n)
            if hi > lo:
                A[b, i] = hi - lo
    return A


def bin_density(nu: GridDensity, bins: int) -> np.ndarray:
    """Exact masses of a grid density over a uniform bins^d partition."""
    A = _bin_overlap_matrix(bins, nu.n)
    if nu.dim == 1:
        return A @ nu.values
    return A @ nu.values @ A.T


def binned_kl_estimate(samples, nu: GridDensity, bins: int) -> float:
    """Histogram KL divergence of the samples against nu, bias corrected.

    The samples are binned to a uniform bins^d partition and nu is integrated
    over the same partition.  The plug-in value gets the Miller-Madow entropy
    correction (nonempty_bins - 1)/(2 * sample_count), which removes the
    leading positive bias; slightly negative outputs are possible.
    """
    pts = np.asarray(samples, dtype=float)
    d = nu.dim
    if d == 1:
        pts = pts.reshape(-1)
        m = pts.shape[0]
    else:
        pts = pts.reshape(-1, d)
        m = pts.shape[0]
    if m < 100 * bins**d:
        raise ValueError(f"need at least {100 * bins ** d} samples, got {m}")
    idx = np.clip((pts * bins).astype(int), 0, bins - 1)
    if d == 1:
        counts = np.bincount(idx, minlength=bins).astype(float)
    else:
        flat = idx[:, 0] * bins + idx[:, 1]
        counts = np.bincount(flat, minlength=bins * bins).astype(float)
    q = bin_density(nu, bins).ravel()
    p = counts / m
    occupied = p > 0
    if np.any(q[occupied] == 0):
        return math.inf
    plugin = float(np.sum(p[occupied] * np.log(p[occupied] / q[occupied])))
    correction = (int(np.count_nonzero(occupied)) - 1) / (2.0 * m)
    return plugin - correction


# ---------------------------------------------------------------------------
# Variational rare-event identity on finite spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DVCheckResult:
    """Both sides of -log mu(A) = inf{H(nu|mu): nu(A)=1} plus the raw scan value."""

    lhs: float
    rhs: float
    scan_minimum: float
    refined_minimum: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    def __iter__(self):
        return iter((self.lhs, self.rhs))


def dv_check(mu, A, grid_steps: int = 40) -> DVCheckResult:
    """Brute-force check of the variational identity on a <=4-state space.

    The scan walks the simplex of measures supported on A at resolution
    ``grid_steps``; the refinement evaluates the closed-form minimizer
    nu* = mu restricted to A, renormalized.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or len(mu) > 4:
        raise ValueError("mu must be a probability vector with at most 4 states")
    if np.any(mu < 0) or abs(float(mu.sum()) - 1.0) > 1e-12:
        raise ValueError("mu must be a probability vector")
    A = sorted(set(int(i) for i in A))
    if not A or min(A) < 0 or max(A) >= len(mu):
        raise ValueError("A must be a nonempty subset of the index set")
    muA = float(mu[A].sum())
    if muA <= 0:
        raise ValueError("mu(A) = 0: left-hand side is infinite")
    lhs = -math.log(muA)

    # positive-mass states of A; nu putting mass on a mu-null state has H = +inf
    support = [i for i in A if mu[i] > 0]
    mu_s = mu[support]
    g = int(grid_steps)
    if g < 1:
        raise ValueError("grid_steps must be >= 1")
    scan_min = math.inf
    for counts in itertools.product(range(g + 1), repeat=len(support) - 1):
        rest = g - sum(counts)
        if rest < 0:
            continue
        w = np.array(counts + (rest,), dtype=float) / g
        pos = w > 0
        h = float(np.sum(w[pos] * np.log(w[pos] / mu_s[pos])))
        scan_min = min(scan_min, h)

    nu_star = mu_s / muA
    refined = float(np.sum(nu_star * np.log(nu_star / mu_s)))
    return DVCheckResult(
        lhs=lhs,
        rhs=min(scan_min, refined),
        scan_minimum=scan_min,
        refined_minimum=refined,
    )
