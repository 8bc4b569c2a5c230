"""Monte Carlo harness for empirical-measure concentration and marginal-KL decay.

For a grid of particle counts N and thresholds epsilon, the harness estimates

    P[ d_p( empirical measure at time T, limit density at time T ) > epsilon ]

from M independent replicas (either the interacting system or i.i.d. draws
from the limit density as a baseline), fits the exponential decay rate of the
survival probability in N, and estimates the KL divergence of the
one-particle marginal from the limit density across N.

Every replica's distance is computed once and compared against all epsilons,
so exceedance events are exactly nested.  Replicas are keyed by
(seed, N, replica) and reassembled in index order, which makes the outputs
byte-identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .entropy import binned_kl_estimate
from .kernels import DriftSpec, KernelSpec
from .meanfield import GridDensity, coarsen_density, solve_pde
from .metrics import (
    EmpiricalMeasure,
    RateQuery,
    rate_a_p,
    sinkhorn_self_cost,
    wasserstein_1d,
    wasserstein_sinkhorn,
)
from .particles import SimParams, replica_streams, sample_initial, simulate

_WILSON_Z = 1.959963984540054  # two-sided 95%

MODES = ("particle", "iid_baseline")


@dataclass(frozen=True)
class ExperimentPlan:
    """One sweep over particle counts and thresholds."""

    kernel: KernelSpec
    T: float
    dt: float
    N_list: tuple
    epsilon_list: tuple
    p: float
    M: int
    mode: str
    seed: int
    drift: DriftSpec | None = None
    rho0: GridDensity | None = None  # None = default bump 1 + 0.5 cos(2 pi x)
    grid_n: int | None = None  # None = 256 (d=1) / 128 (d=2)
    bins: int | None = None  # None = 32 (d=1) / 16 per axis (d=2)
    sinkhorn_reg: float = 1e-2
    pde_dt: float | None = None  # None = dt/8; the reference density is solved
    # beyond the particle discretization so its bias does not enter comparisons
    couple_delta: bool = False  # opt-in singular-limit probe: simulate each N
    # with the kernel mollified at delta(N) = N^(-1/(2d)); off by default so the
    # bounded-kernel hypotheses of the concentration experiments hold verbatim

    def __post_init__(self):
        object.__setattr__(self, "N_list", tuple(int(n) for n in self.N_list))
        object.__setattr__(self, "epsilon_list", tuple(float(e) for e in self.epsilon_list))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if len(self.N_list) < 3 or any(
            b <= a for a, b in zip(self.N_list, self.N_list[1:])
        ):
            raise ValueError("N_list must be strictly increasing with length >= 3")
        if self.M < 200:
            raise ValueError("M must be >= 200 for usable probability resolution")
        for eps in self.epsilon_list:
            rate_a_p(RateQuery(p=self.p, d=self.dim, epsilon=eps))  # validates eps > 0

    @property
    def dim(self) -> int:
        return self.kernel.dim

    @property
    def pde_grid_n(self) -> int:
        if self.grid_n is not None:
            return self.grid_n
        return 256 if self.dim == 1 else 128

    @property
    def kl_bins(self) -> int:
        if self.bins is not None:
            return self.bins
        return 32 if self.dim == 1 else 16

    def initial_density(self) -> GridDensity:
        if self.rho0 is not None:
            return self.rho0
        from .meanfield import cosine_density

        return cosine_density(self.pde_grid_n, self.dim, amplitude=0.5)


@dataclass(frozen=True)
class ConcentrationRecord:
    """One (N, epsilon) cell of the experiment."""

    mode: str
    p: float
    d: int
    N: int
    epsilon: float
    M: int
    exceed_count: int
    p_hat: float
    wilson_lo: float
    wilson_hi: float
    a_p_value: float
    seed: int

    def __post_init__(self):
        if not 0 <= self.exceed_count <= self.M:
            raise ValueError("exceed_count out of range")
        if abs(self.p_hat - self.exceed_count / self.M) > 1e-15:
            raise ValueError("p_hat must equal exceed_count / M")
        if not (self.wilson_lo - 1e-12 <= self.p_hat <= self.wilson_hi + 1e-12):
            raise ValueError("Wilson interval must contain p_hat")


def wilson_interval(count: int, total: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """95% Wilson score interval; at count = 0 the upper bound is z^2/(M + z^2)."""
    if not 0 <= count <= total:
        raise ValueError("count out of range")
    phat = count / total
    denom = 1.0 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    lo = 0.0 if count == 0 else max(0.0, center - half)
    hi = 1.0 if count == total else min(1.0, center + half)
    return lo, hi


# ---------------------------------------------------------------------------
# Replica work items (top level so they pickle for the process pool)
# ---------------------------------------------------------------------------


def _cell_kernel(plan: ExperimentPlan, N: int) -> KernelSpec:
    if not plan.couple_delta:
        return plan.kernel
    from .kernels import mollify

    return mollify(plan.kernel, float(N) ** (-1.0 / (2.0 * plan.dim)))


def _replica_final_positions(plan: ExperimentPlan, rho_T: GridDensity, N: int, replica: int):
    if plan.mode == "iid_baseline":
        init_rng, _ = replica_streams(plan.seed, N, replica)
        return sample_initial(rho_T, N, init_rng).positions
    params = SimParams(
        N=N,
        T=plan.T,
        dt=plan.dt,
        seed=plan.seed,
        kernel=_cell_kernel(plan, N),
        drift=plan.drift,
        rho0=plan.initial_density(),
    )
    return simulate(params, replica=replica).positions


def _distance_chunk(args) -> tuple[int, np.ndarray]:
    plan, rho_T, dist_rho, nu_self, N, lo, hi = args
    out = np.empty(hi - lo)
    for r in range(lo, hi):
        emp = EmpiricalMeasure(_replica_final_positions(plan, rho_T, N, r))
        if plan.dim == 1:
            out[r - lo] = wasserstein_1d(emp, dist_rho, plan.p)
        else:
            out[r - lo] = wasserstein_sinkhorn(
                emp, dist_rho, plan.p, reg=plan.sinkhorn_reg, nu_self=nu_self
            )
    return lo, out


def _marginal_chunk(args) -> tuple[int, np.ndarray]:
    plan, rho_T, N, lo, hi = args
    out = np.empty((hi - lo, plan.dim))
    for r in range(lo, hi):
        out[r - lo] = _replica_final_positions(plan, rho_T, N, r)[0]
    return lo, out


def _run_chunks(fn, prefix_args, M, workers):
    n_chunks = 1 if workers <= 1 else min(M, workers * 4)
    bounds = np.linspace(0, M, n_chunks + 1).astype(int)
    tasks = [
        prefix_args + (int(lo), int(hi))
        for lo, hi in zip(bounds[:-1], bounds[1:])
        if hi > lo
    ]
    if workers <= 1:
        results = [fn(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, tasks))
    results.sort(key=lambda pair: pair[0])
    return np.concatenate([arr for _, arr in results], axis=0)


# ---------------------------------------------------------------------------
# The harness
# ---------------------------------------------------------------------------


class ConcentrationHarness:
    """Caches the limit density and the per-replica distances of one plan."""

    def __init__(self, plan: ExperimentPlan, rho_T: GridDensity | None = None):
        self.plan = plan
        self._rho_T = rho_T
        self._distances: dict[int, np.ndarray] = {}
        self._dist_target = None

    def limit_density(self) -> GridDensity:
        """Solve the limit equation once from the plan's initial density."""
        if self._rho_T is None:
            dt = self.plan.pde_dt if self.plan.pde_dt is not None else self.plan.dt / 8
            self._rho_T = solve_pde(
                self.plan.initial_density(),
                self.plan.kernel,
                self.plan.drift,
                self.plan.T,
                dt,
            ).final
        return self._rho_T

    def _distance_target(self):
        """Distance-side view of the limit density (+ cached Sinkhorn self term).

        In d=2 the entropic estimator compares against a block-averaged copy
        of the limit density (at most 64 points per axis) so that its self
        term stays tractable; it is computed once per plan.
        """
        if self._dist_target is None:
            rho_T = self.limit_density()
            if self.plan.dim == 1:
                self._dist_target = (rho_T, None)
            else:
                coarse = coarsen_density(rho_T, max(1, rho_T.n // 64))
                nu_self = sinkhorn_self_cost(coarse, self.plan.p, self.plan.sinkhorn_reg)
                self._dist_target = (coarse, nu_self)
        return self._dist_target

    def distances(self, N: int, workers: int = 1) -> np.ndarray:
        """Per-replica distances d_p(empirical, limit), computed once per N."""
        if N not in self._distances:
            dist_rho, nu_self = self._distance_target()
            self._distances[N] = _run_chunks(
                _distance_chunk,
                (self.plan, self.limit_density(), dist_rho, nu_self, N),
                self.plan.M,
                workers,
            )
        return self._distances[N]

    def run_cell(self, N: int, epsilon: float, workers: int = 1) -> ConcentrationRecord:
        """Estimate the exceedance probability for one (N, epsilon) cell."""
        dist = self.distances(N, workers)
        count = int(np.count_nonzero(dist > epsilon))
        lo, hi = wilson_interval(count, self.plan.M)
        return ConcentrationRecord(
            mode=self.plan.mode,
            p=self.plan.p,
            d=self.plan.dim,
            N=N,
            epsilon=epsilon,
            M=self.plan.M,
            exceed_count=count,
            p_hat=count / self.plan.M,
            wilson_lo=lo,
            wilson_hi=hi,
            a_p_value=rate_a_p(RateQuery(p=self.plan.p, d=self.plan.dim, epsilon=epsilon)),
            seed=self.plan.seed,
        )

    def run_all(self, workers: int = 1) -> list:
        """All cells, N-major / epsilon-minor."""
        return [
            self.run_cell(N, eps, workers)
            for N in self.plan.N_list
            for eps in sorted(self.plan.epsilon_list)
        ]


def run_cell(plan: ExperimentPlan, N: int, epsilon: float, workers: int = 1) -> ConcentrationRecord:
    return ConcentrationHarness(plan).run_cell(N, epsilon, workers)


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------


class DegenerateCellsError(ValueError):
    """Raised when fewer than 3 cells have 0 < p_hat < 1."""

    def __init__(self, degenerate):
        self.degenerate = list(degenerate)
        super().__init__(
            "need >= 3 cells with 0 < p_hat < 1; degenerate cells: "
            + ", ".join(f"(N={n}, p_hat={ph})" for n, ph in self.degenerate)
        )


@dataclass(frozen=True)
class RateFit:
    mode: str
    p: float
    epsilon: float
    slope: float
    r2: float
    a_p_value: float
    n_cells: int


def fit_exponential_rate(records) -> RateFit:
    """Least-squares fit of -log p_hat against N for one (mode, p, epsilon) group.

    Cells with p_hat in {0, 1} are excluded; fewer than 3 usable cells raises
    DegenerateCellsError naming them.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to fit")
    keys = {(r.mode, r.p, r.epsilon) for r in records}
    if len(keys) != 1:
        raise ValueError(f"records mix (mode, p, epsilon) groups: {sorted(keys)}")
    usable = [r for r in records if 0.0 < r.p_hat < 1.0]
    if len(usable) < 3:
        raise DegenerateCellsError(
            (r.N, r.p_hat) for r in records if not 0.0 < r.p_hat < 1.0
        )
    n = np.array([r.N for r in usable], dtype=float)
    y = -np.log(np.array([r.p_hat for r in usable]))
    slope, intercept = np.polyfit(n, y, 1)
    resid = y - (slope * n + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-300:
        r2 = 1.0 if ss_res <= 1e-20 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    r0 = records[0]
    return RateFit(
        mode=r0.mode,
        p=r0.p,
        epsilon=r0.epsilon,
        slope=float(slope),
        r2=float(r2),
        a_p_value=r0.a_p_value,
        n_cells=len(usable),
    )


def fit_all_rates(records) -> tuple[list, dict]:
    """Group records by epsilon and fit each group; returns (fits, skipped).

    ``skipped`` maps epsilon to the degenerate-cell list when a group cannot
    be fitted.
    """
    fits, skipped = [], {}
    by_eps: dict[float, list] = {}
    for r in records:
        by_eps.setdefault(r.epsilon, []).append(r)
    for eps in sorted(by_eps):
        try:
            fits.append(fit_exponential_rate(by_eps[eps]))
        except DegenerateCellsError as err:
            skipped[eps] = err.degenerate
    return fits, skipped


# ---------------------------------------------------------------------------
# Marginal-KL sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EntropySweep:
    entries: tuple  # of (N, kl_estimate)
    slope: float  # log-log regression slope of kl vs N (nan if < 2 positive kl)
    excluded: tuple = ()  # N values whose kl was nonpositive


def loglog_slope(ns, values) -> tuple[float, tuple]:
    """Slope of log(value) vs log(N), excluding nonpositive values."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 0
    excluded = tuple(int(n) for n in ns[~keep])
    if int(np.count_nonzero(keep)) < 2:
        return math.nan, excluded
    slope = float(np.polyfit(np.log(ns[keep]), np.log(values[keep]), 1)[0])
    return slope, excluded


def entropy_decay_sweep(plan: ExperimentPlan, workers: int = 1) -> EntropySweep:
    """KL(law of particle 1 at T || limit density at T) across N.

    Each replica contributes only particle 1's position (one exchangeable
    representative per replica), so the M pooled samples are i.i.d.
    """
    if plan.mode != "particle":
        raise ValueError("entropy sweep requires a particle-mode plan")
    bins = plan.kl_bins
    if plan.M < 100 * bins**plan.dim:
        raise ValueError(
            f"M={plan.M} too small for {bins}^{plan.dim} bins; need >= {100 * bins ** plan.dim}"
        )
    harness = ConcentrationHarness(plan)
    rho_T = harness.limit_density()
    entries = []
    for N in plan.N_list:
        samples = _run_chunks(_marginal_chunk, (plan, rho_T, N), plan.M, workers)
        kl = binned_kl_estimate(samples, rho_T, bins)
        entries.append((N, kl))
    slope, excluded = loglog_slope([n for n, _ in entries], [k for _, k in entries])
    return EntropySweep(entries=tuple(entries), slope=slope, excluded=excluded)


# ---------------------------------------------------------------------------
# Tabular output
# ---------------------------------------------------------------------------

CSV_HEADER = "mode,p,d,N,epsilon,M,exceed_count,p_hat,wilson_lo,wilson_hi,a_p,seed"


def emit_results(records, path) -> None:
    """Write concentration records as CSV, N-major / epsilon-minor."""
    rows = sorted(records, key=lambda r: (r.N, r.epsilon))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.mode},{r.p:.17g},{r.d},{r.N},{r.epsilon:.17g},{r.M},"
                f"{r.exceed_count},{r.p_hat:.17g},{r.wilson_lo:.17g},"
                f"{r.wilson_hi:.17g},{r.a_p_value:.17g},{r.seed}\n"
            )


def read_results(path) -> list:
    """Parse a CSV produced by emit_results back into records."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            f = line.strip().split(",")
            out.append(
                ConcentrationRecord(
                    mode=f[0],
                    p=float(f[1]),
                    d=int(f[2]),
                    N=int(f[3]),
                    epsilon=float(f[4]),
                    M=int(f[5]),
                    exceed_count=int(f[6]),
                    p_hat=float(f[7]),
                    wilson_lo=float(f[8]),
                    wilson_hi=float(f[9]),
                    a_p_value=float(f[10]),
                    seed=int(f[11]),
                )
            )
    return out


def default_plan(mode: str = "particle", seed: int = 7) -> ExperimentPlan:
    """The desk-scale acceptance plan: d=1, p=1, sine kernel, four N, three epsilon.

    The double-well confinement keeps the limit density nonuniform at T and
    maximizes the Wasserstein fluctuation scale of the empirical measure.
    """
    return ExperimentPlan(
        kernel=KernelSpec(family="smooth_trig", dim=1, amplitude=1.0),
        T=0.5,
        dt=0.5 / 400,
        N_list=(64, 128, 256, 512),
        epsilon_list=(0.05, 0.1, 0.2),
        p=1.0,
        M=2000,
        mode=mode,
        seed=seed,
        drift=DriftSpec(kind="gradient", amplitude=4.0, mode=2),
    )


def machine_workers() -> int:
    return os.cpu_count() or 1
