"""Render survival, rate-vs-rate-function, and KL-decay figures.

Inputs are the harness's published artifacts:

* ``survival``   <- concentration records CSV (strict header check),
* ``rate_vs_ap`` <- rate-fit JSON written next to the records,
* ``kl_decay``   <- marginal-KL sweep CSV (``N,kl_estimate``).

All figures use a fixed style and carry no timestamps or machine metadata,
so rendering the same input twice produces byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

RECORDS_HEADER = "mode,p,d,N,epsilon,M,exceed_count,p_hat,wilson_lo,wilson_hi,a_p,seed"
SWEEP_HEADER = "N,kl_estimate"

FIGURE_KINDS = ("survival", "rate_vs_ap", "kl_decay")

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "svg.hashsalt": "chaoslab",
}


class PlotDataError(ValueError):
    """Schema mismatch or empty data."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: input artifact, figure kind, output image path."""

    input_path: str
    kind: str
    output_path: str
    force: bool = False

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"kind must be one of {FIGURE_KINDS}")


def read_records_csv(path: str) -> dict:
    """Parse the concentration records CSV into column arrays (strict header)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != RECORDS_HEADER:
            raise PlotDataError(
                f"input schema mismatch: expected header {RECORDS_HEADER!r}, got {header!r}"
            )
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise PlotDataError("empty data: records CSV has no rows")
    cols = list(zip(*rows))
    return {
        "mode": np.array(cols[0]),
        "p": np.array(cols[1], dtype=float),
        "d": np.array(cols[2], dtype=int),
        "N": np.array(cols[3], dtype=int),
        "epsilon": np.array(cols[4], dtype=float),
        "M": np.array(cols[5], dtype=int),
        "exceed_count": np.array(cols[6], dtype=int),
        "p_hat": np.array(cols[7], dtype=float),
        "wilson_lo": np.array(cols[8], dtype=float),
        "wilson_hi": np.array(cols[9], dtype=float),
        "a_p": np.array(cols[10], dtype=float),
        "seed": np.array(cols[11], dtype=int),
    }


def read_rate_fits_json(path: str) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict) or "fits" not in payload:
        raise PlotDataError("input schema mismatch: expected a rate-fit JSON with 'fits'")
    fits = payload["fits"]
    required = {"mode", "p", "epsilon", "slope", "r2", "a_p"}
    for fit in fits:
        if not required <= set(fit):
            raise PlotDataError(
                f"input schema mismatch: fit entry missing {sorted(required - set(fit))}"
            )
    if not fits:
        raise PlotDataError("empty data: no rate fits to plot")
    return fits


def read_sweep_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != SWEEP_HEADER:
            raise PlotDataError(
                f"input schema mismatch: expected header {SWEEP_HEADER!r}, got {header!r}"
            )
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise PlotDataError("empty data: sweep CSV has no rows")
    ns = np.array([r[0] for r in rows], dtype=float)
    kl = np.array([r[1] for r in rows], dtype=float)
    return ns, kl


def rate_function(p: float, d: int, eps: np.ndarray) -> np.ndarray:
    """Three-regime concentration rate, matching the harness's published a_p."""
    eps = np.asarray(eps, dtype=float)
    if p > d / 2:
        return eps ** (2 * p)
    if p == d / 2:
        return eps ** (2 * p) / np.log(2.0 + eps**-p) ** 2
    return eps**d


def _survival_figure(records: dict):
    fig, ax = plt.subplots()
    epsilons = np.unique(records["epsilon"])
    markers = ["o", "s", "^", "D", "v", "P"]
    for i, eps in enumerate(epsilons):
        sel = records["epsilon"] == eps
        order = np.argsort(records["N"][sel])
        N = records["N"][sel][order]
        p_hat = records["p_hat"][sel][order]
        lo = records["wilson_lo"][sel][order]
        hi = records["wilson_hi"][sel][order]
        floor = 0.5 / records["M"][sel][order]  # display floor for zero counts
        shown = np.maximum(p_hat, floor)
        style = dict(marker=markers[i % len(markers)], label=f"eps = {eps:g}")
        ax.plot(N, shown, **style)
        ax.fill_between(N, np.maximum(lo, floor), np.maximum(hi, floor), alpha=0.2)
        zero = p_hat == 0
        if np.any(zero):
            ax.plot(N[zero], floor[zero], linestyle="none", marker="v", color="gray")
    ax.set_yscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("estimated exceedance probability")
    mode = records["mode"][0]
    ax.set_title(f"survival vs N ({mode}); bands: 95% Wilson, arrows: zero counts")
    ax.legend()
    return fig


def _rate_vs_ap_figure(fits: list):
    eps = np.array([f["epsilon"] for f in fits], dtype=float)
    slopes = np.array([f["slope"] for f in fits], dtype=float)
    ap = np.array([f["a_p"] for f in fits], dtype=float)
    order = np.argsort(eps)
    eps, slopes, ap = eps[order], slopes[order], ap[order]
    fig, ax = plt.subplots()
    ax.plot(eps, slopes, marker="o", linestyle="none", label="fitted rate")
    # one multiplicative constant fitted by least squares: the theory bound's
    # prefactor is not identifiable, only the shape is compared
    scale = float(slopes @ ap / (ap @ ap)) if np.any(ap) else 1.0
    p = float(fits[0]["p"])
    d = int(fits[0].get("d", 1))
    dense = np.linspace(eps.min() * 0.8, eps.max() * 1.1, 200)
    ax.plot(dense, scale * rate_function(p, d, dense),
            label=f"rate function shape x {scale:.3g}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("exponential rate in N")
    ax.set_title("fitted decay rate vs rate-function shape (scale fitted)")
    ax.legend()
    return fig


def _kl_decay_figure(ns: np.ndarray, kl: np.ndarray):
    fig, ax = plt.subplots()
    pos = kl > 0
    if not np.any(pos):
        raise PlotDataError("empty data: no positive KL values to plot")
    ax.loglog(ns[pos], kl[pos], marker="o", linestyle="-", label="KL estimate")
    if np.any(~pos):
        ax.plot(ns[~pos], np.full(np.count_nonzero(~pos), np.min(kl[pos])),
                linestyle="none", marker="x", color="gray", label="nonpositive (shown at floor)")
    ref = kl[pos][0] * (ns[pos] / ns[pos][0]) ** -1.0
    ax.loglog(ns[pos], ref, linestyle="--", label="reference slope -1")
    if np.count_nonzero(pos) >= 2:
        slope = np.polyfit(np.log(ns[pos]), np.log(kl[pos]), 1)[0]
        ax.set_title(f"marginal KL vs N (fitted log-log slope {slope:.2f})")
    else:
        ax.set_title("marginal KL vs N")
    ax.set_xlabel("N")
    ax.set_ylabel("binned KL estimate")
    ax.legend()
    return fig


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path.

    Never mutates inputs; refuses to overwrite an existing output unless
    ``force`` is set.
    """
    if os.path.exists(spec.output_path) and not spec.force:
        raise FileExistsError(
            f"output {spec.output_path!r} exists; pass force to overwrite"
        )
    with plt.rc_context(_STYLE):
        if spec.kind == "survival":
            fig = _survival_figure(read_records_csv(spec.input_path))
        elif spec.kind == "rate_vs_ap":
            fig = _rate_vs_ap_figure(read_rate_fits_json(spec.input_path))
        else:
            fig = _kl_decay_figure(*read_sweep_csv(spec.input_path))
        try:
            fig.savefig(spec.output_path, metadata={"Software": None})
        finally:
            plt.close(fig)
    return spec.output_path
