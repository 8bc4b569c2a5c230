"""Wasserstein distances on the periodic unit box and the concentration rate function.

The 1-d solver is exact circular optimal transport: for cost |.|^p the optimal
plan is a quantile coupling up to a rotation of mass, so the distance is the
minimum over one scalar rotation parameter of a closed-form piecewise integral
(p = 1 uses the equivalent vertical-shift formula, whose optimum is a median).
The 2-d production estimator is debiased entropic OT; a Hungarian-assignment
oracle on small instances backs both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .meanfield import GridDensity
from .torus import torus_distance, wrap


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniformly weighted atoms on the torus, shape (N, d)."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] not in (1, 2):
            raise ValueError("atoms must be (N, d) with d in {1, 2} and N >= 1")
        object.__setattr__(self, "atoms", wrap(a))

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class RateQuery:
    """Arguments of the concentration rate function a_p(epsilon)."""

    p: float
    d: int
    epsilon: float


def rate_a_p(q: RateQuery) -> float:
    """Three-regime rate: eps^(2p) above d/2, log-corrected at d/2, eps^d below.

    Branch selection is the exact comparison p vs d/2.
    """
    if not q.epsilon > 0:
        raise ValueError("epsilon must be positive")
    if q.p < 1:
        raise ValueError("p must be >= 1")
    if q.d < 1:
        raise ValueError("d must be >= 1")
    half_d = q.d / 2.0
    if q.p > half_d:
        return float(q.epsilon ** (2.0 * q.p))
    if q.p == half_d:
        return float(
            q.epsilon ** (2.0 * q.p) / math.log(2.0 + q.epsilon**-q.p) ** 2
        )
    return float(q.epsilon**q.d)


# ---------------------------------------------------------------------------
# CDF machinery on the circle
# ---------------------------------------------------------------------------


def _cdf(measure, v: np.ndarray, side: str) -> np.ndarray:
    """CDF of a 1-d measure at points v; side='right' gives F(v), 'left' F(v-)."""
    if isinstance(measure, EmpiricalMeasure):
        s = np.sort(measure.atoms[:, 0])
        return np.searchsorted(s, v, side=side) / len(s)
    n = measure.n
    cum = np.concatenate([[0.0], np.cumsum(measure.values) / n])
    i = np.clip(np.floor(v * n).astype(int), 0, n - 1)
    return cum[i] + measure.values[i] * (v - i / n)


def _breakpoints(measure) -> np.ndarray:
    if isinstance(measure, EmpiricalMeasure):
        return np.sort(measure.atoms[:, 0])
    return np.arange(1, measure.n) / measure.n


def _difference_segments(mu, nu) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Piecewise-linear description of G = F_mu - F_nu on [0, 1).

    Returns (lengths, g_left, g_right) per segment between consecutive
    breakpoints; CDF jumps at atoms happen exactly at segment boundaries, so
    G is linear inside every segment.
    """
    xs = np.unique(np.concatenate([[0.0, 1.0], _breakpoints(mu), _breakpoints(nu)]))
    x0, x1 = xs[:-1], xs[1:]
    keep = x1 > x0
    x0, x1 = x0[keep], x1[keep]
    g_l = _cdf(mu, x0, "right") - _cdf(nu, x0, "right")
    g_r = _cdf(mu, x1, "left") - _cdf(nu, x1, "left")
    return x1 - x0, g_l, g_r


def _w1_circle(mu, nu) -> float:
    """Exact circular 1-Wasserstein: min over theta of int |F_mu - F_nu - theta|."""
    L, gl, gr = _difference_segments(mu, nu)

    def measure_leq(theta):
        lo = np.minimum(gl, gr)
        hi = np.maximum(gl, gr)
        frac = np.where(
            hi <= theta, 1.0, np.where(lo >= theta, 0.0, (theta - lo) / np.where(hi > lo, hi - lo, 1.0))
        )
        return float(np.sum(L * frac))

    a, b = float(min(gl.min(), gr.min())), float(max(gl.max(), gr.max()))
    for _ in range(100):
        mid = 0.5 * (a + b)
        if measure_leq(mid) < 0.5:
            a = mid
        else:
            b = mid
    theta = 0.5 * (a + b)
    va, vb = gl - theta, gr - theta
    same = va * vb >= 0
    contrib = np.where(
        same,
        0.5 * (np.abs(va) + np.abs(vb)),
        0.5 * (va**2 + vb**2) / np.maximum(np.abs(va) + np.abs(vb), 1e-300),
    )
    return float(np.sum(L * contrib))


def _quantile_knots(measure) -> tuple[np.ndarray, np.ndarray]:
    """Knots (t_k, x_k) of the quantile function on [0, 1], linear in between.

    Zero-mass grid cells appear as repeated t values (vertical jumps of the
    quantile), which contribute zero-length t-intervals.
    """
    if isinstance(measure, EmpiricalMeasure):
        s = np.sort(measure.atoms[:, 0])
        N = len(s)
        t = np.repeat(np.arange(N + 1) / N, 2)[1:-1]
        x = np.repeat(s, 2)
        return t, x
    F = np.concatenate([[0.0], np.cumsum(measure.values) / measure.n])
    F[-1] = 1.0
    x = np.arange(measure.n + 1) / measure.n
    return F, x


def _wp_circle_cost(mu, nu, p: float, theta: float) -> float:
    """Quantile-coupling cost int_0^1 |Q_mu(t) - Q_nu_lifted(t + theta)|^p dt."""
    t_mu, x_mu = _quantile_knots(mu)
    t_nu, x_nu = _quantile_knots(nu)

    # Q_nu_shift(t) = Q_nu_lift(t + theta) has knots at t_nu - theta; extend the
    # lift one period each way so it covers t in [0, 1] for theta in [-1, 1]
    ext_t = np.concatenate([t_nu - theta - 1.0, t_nu - theta, t_nu - theta + 1.0])
    ext_x = np.concatenate([x_nu - 1.0, x_nu, x_nu + 1.0])

    inner = ext_t[(ext_t > 0.0) & (ext_t < 1.0)]
    cuts = np.unique(np.concatenate([t_mu[(t_mu > 0) & (t_mu < 1)], inner, [0.0, 1.0]]))

    def interp(ts, xs, t):
        # piecewise linear; repeated ts encode jumps, harmless at interior points
        return np.interp(t, ts, xs)

    a = cuts[:-1]
    b = cuts[1:]
    keep = (b - a) > 1e-15
    a, b = a[keep], b[keep]
    m0 = a + 0.25 * (b - a)
    m1 = a + 0.75 * (b - a)
    # both quantiles are linear strictly inside each cut interval; two interior
    # samples recover the affine integrand u(t) exactly
    u0 = interp(t_mu, x_mu, m0) - interp(ext_t, ext_x, m0)
    u1 = interp(t_mu, x_mu, m1) - interp(ext_t, ext_x, m1)
    s = (u1 - u0) / (m1 - m0)
    ua = u0 - s * (m0 - a)
    ub = u1 + s * (b - m1)
    flat = np.abs(s) * (b - a) < 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        anti = (
            np.sign(ub) * np.abs(ub) ** (p + 1) - np.sign(ua) * np.abs(ua) ** (p + 1)
        ) / (s * (p + 1))
    mid = np.abs(0.5 * (ua + ub)) ** p * (b - a)
    return float(np.sum(np.where(flat, mid, anti)))


def _wp_circle(mu, nu, p: float) -> float:
    """Golden-section minimization of the convex rotation objective for p > 1."""
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = -1.0, 1.0
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc = _wp_circle_cost(mu, nu, p, c)
    fd = _wp_circle_cost(mu, nu, p, d)
    for _ in range(90):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = _wp_circle_cost(mu, nu, p, c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = _wp_circle_cost(mu, nu, p, d)
    return min(fc, fd) ** (1.0 / p)


def _wp_atoms_shift(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float) -> float:
    """Exact equal-count atomic circle OT: best cyclic shift of sorted atoms."""
    x = np.sort(mu.atoms[:, 0])
    y = np.sort(nu.atoms[:, 0])
    N = len(x)
    idx = (np.arange(N)[:, None] + np.arange(N)[None, :]) % N
    diffs = x[:, None] - y[idx]
    diffs = (diffs + 0.5) - np.floor(diffs + 0.5) - 0.5
    costs = np.sum(np.abs(diffs) ** p, axis=0) / N
    return float(np.min(costs) ** (1.0 / p))


def wasserstein_1d(mu, nu, p: float = 1.0) -> float:
    """Exact p-Wasserstein distance between two measures on the circle.

    Accepts EmpiricalMeasure or GridDensity for either argument (d = 1 only).
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    for m in (mu, nu):
        d = m.dim if isinstance(m, (EmpiricalMeasure, GridDensity)) else None
        if d != 1:
            raise ValueError("wasserstein_1d requires 1-dimensional measures")
    if isinstance(mu, EmpiricalMeasure) and isinstance(nu, EmpiricalMeasure) and mu.n == nu.n:
        return _wp_atoms_shift(mu, nu, p)
    if p == 1.0:
        return _w1_circle(mu, nu)
    return _wp_circle(mu, nu, p)


# ---------------------------------------------------------------------------
# Exact small-instance oracle
# ---------------------------------------------------------------------------


def wasserstein_exact_small(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 1.0) -> float:
    """Optimal-assignment (Hungarian) distance for <= 64 atoms a side."""
    if mu.n != nu.n:
        raise ValueError("exact oracle requires equal atom counts")
    if mu.n > 64:
        raise ValueError("exact oracle limited to 64 atoms")
    cost = torus_distance(mu.atoms[:, None, :], nu.atoms[None, :, :]) ** p
    rows, cols = linear_sum_assignment(cost)
    return float((cost[rows, cols].sum() / mu.n) ** (1.0 / p))


# ---------------------------------------------------------------------------
# Debiased entropic OT (production d=2 estimator)
# ---------------------------------------------------------------------------


class SinkhornError(RuntimeError):
    """Raised when the fixed-point iteration fails to reach tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def _measure_points_weights(m) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(m, EmpiricalMeasure):
        return m.atoms, np.full(m.n, 1.0 / m.n)
    if isinstance(m, GridDensity):
        pts = m.grid_points()
        w = m.values.ravel() / m.values.size
        keep = w > 0
        return pts[keep], w[keep] / w[keep].sum()
    raise TypeError("measure must be EmpiricalMeasure or GridDensity")


def _lse(M: np.ndarray, axis: int) -> np.ndarray:
    mx = np.max(M, axis=axis, keepdims=True)
    out = mx.squeeze(axis) + np.log(np.sum(np.exp(M - mx), axis=axis))
    return out


def _sinkhorn_cost(
    C: np.ndarray, a: np.ndarray, b: np.ndarray, reg: float, max_iters: int, tol: float
) -> float:
    """Transport cost <plan, C> at the converged entropic plan (log domain)."""
    log_a = np.log(a)
    log_b = np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    err = math.inf
    for _ in range(max_iters):
        f = -reg * _lse((g[None, :] - C) / reg + log_b[None, :], axis=1)
        g = -reg * _lse((f[:, None] - C) / reg + log_a[:, None], axis=0)
        # row marginals of the plan; columns are exact after the g update
        logP = (f[:, None] + g[None, :] - C) / reg + log_a[:, None] + log_b[None, :]
        P = np.exp(logP)
        err = float(np.max(np.abs(P.sum(axis=1) - a)))
        if err < tol:
            return float(np.sum(P * C))
    raise SinkhornError(f"no convergence in {max_iters} iterations", residual=err)


def _sinkhorn_self_cost(C: np.ndarray, a: np.ndarray, reg: float, max_iters: int, tol: float) -> float:
    """Transport cost of the symmetric self problem OT_reg(m, m)."""
    log_a = np.log(a)
    f = np.zeros(len(a))
    err = math.inf
    for _ in range(max_iters):
        f_new = 0.5 * (f - reg * _lse((f[None, :] - C) / reg + log_a[None, :], axis=1))
        err = float(np.max(np.abs(f_new - f)))
        f = f_new
        if err < tol * max(reg, 1e-12):
            P = np.exp((f[:, None] + f[None, :] - C) / reg + log_a[:, None] + log_a[None, :])
            return float(np.sum(P * C))
    raise SinkhornError(f"no convergence in {max_iters} iterations", residual=err)


def sinkhorn_self_cost(m, p: float = 2.0, reg: float = 1e-2,
                       max_iters: int = 200000, tol: float = 1e-6) -> float:
    """Self term OT_reg(m, m) of the debiased estimator; cacheable per target."""
    pts, w = _measure_points_weights(m)
    C = torus_distance(pts[:, None, :], pts[None, :, :]) ** p
    return _sinkhorn_self_cost(C, w, reg, max_iters, tol)


def wasserstein_sinkhorn(
    mu,
    nu,
    p: float = 2.0,
    reg: float = 1e-2,
    max_iters: int = 200000,
    tol: float = 1e-6,
    nu_self: float | None = None,
) -> float:
    """Debiased entropic OT distance estimate on the torus (any d, meant for d=2).

    Computes S = OT_reg(mu,nu) - (OT_reg(mu,mu) + OT_reg(nu,nu))/2, where
    OT_reg is the transport cost at the converged entropic plan on the cost
    torus_distance^p, and returns max(S, 0)^(1/p).  S moves to the exact cost
    as reg shrinks, at the price of more iterations.  ``nu_self`` lets callers
    reuse a precomputed self term when nu is held fixed across many calls.
    """
    if reg <= 0:
        raise ValueError("reg must be positive")
    x, a = _measure_points_weights(mu)
    y, b = _measure_points_weights(nu)
    Cxy = torus_distance(x[:, None, :], y[None, :, :]) ** p
    Cxx = torus_distance(x[:, None, :], x[None, :, :]) ** p
    ot_xy = _sinkhorn_cost(Cxy, a, b, reg, max_iters, tol)
    ot_xx = _sinkhorn_self_cost(Cxx, a, reg, max_iters, tol)
    if nu_self is None:
        Cyy = torus_distance(y[:, None, :], y[None, :, :]) ** p
        nu_self = _sinkhorn_self_cost(Cyy, b, reg, max_iters, tol)
    s = ot_xy - 0.5 * (ot_xx + nu_self)
    return float(max(s, 0.0) ** (1.0 / p))
