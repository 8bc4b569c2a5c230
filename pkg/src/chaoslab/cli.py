"""Command-line entry point binding JSON configs to the module pipelines.

Commands::

    chaoslab simulate      --config cfg.json   # particle CSV + manifest
    chaoslab solve-pde     --config cfg.json   # density checkpoints + manifest
    chaoslab concentration --config cfg.json   # records CSV + rate-fit JSON
    chaoslab entropy-sweep --config cfg.json   # marginal-KL CSV + fit JSON
    chaoslab dv-check      --config cfg.json   # variational-identity report
    chaoslab kernel-info   --config cfg.json   # kernel diagnostics JSON

Configs are strict: unknown fields are rejected and every violation is listed.
Each run writes ``manifest.json`` echoing the fully resolved config (defaults
included); feeding a manifest back as the config reproduces the run.  Seed
precedence: --seed flag > CHAOSLAB_SEED env var > config.

Exit codes: 0 success, 2 config validation, 3 numerical failure,
4 verification failure (dv-check gap), 5 dv-check infinite left-hand side.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .entropy import dv_check
from .harness import (
    ConcentrationHarness,
    ExperimentPlan,
    emit_results,
    entropy_decay_sweep,
    fit_all_rates,
    machine_workers,
)
from .kernels import (
    DriftSpec,
    KernelSpec,
    kernel_l1_norm_grid,
    kernel_sup_norm_grid,
    primitive_divergence_residual,
    primitive_matrix,
    wminus_norm_surrogate,
)
from .meanfield import (
    BlowUpError,
    GridDensity,
    cosine_density,
    solve_pde,
    uniform_density,
    write_density_csv,
)
from .metrics import SinkhornError
from .particles import SimParams, simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFICATION = 4
EXIT_INFINITE = 5


class ConfigError(ValueError):
    """Carries the full list of violated fields."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# ---------------------------------------------------------------------------
# Config schemas
# ---------------------------------------------------------------------------

_KERNEL_PARAM_KEYS = {
    "zero": set(),
    "smooth_trig": {"amplitude", "mode"},
    "gradient_of_potential": {"amplitude", "mode"},
    "biot_savart_2d": {"amplitude", "m_trunc"},
}

_COMMON_KEYS = {"schema_version", "seed", "output_dir", "d", "grid_n", "kernel", "rho0", "drift"}

_COMMAND_KEYS = {
    "simulate": {"N", "T", "dt", "replicas"},
    "solve-pde": {"T", "dt", "checkpoint_times"},
    "concentration": {"T", "dt", "N_list", "epsilon_list", "p", "M", "mode", "sinkhorn_reg", "couple_delta"},
    "entropy-sweep": {"T", "dt", "N_list", "M", "bins", "couple_delta"},
    "dv-check": {"mu", "A", "grid_steps"},
    "kernel-info": set(),
}

_DEFAULTS = {
    "schema_version": 1,
    "seed": 0,
    "output_dir": ".",
    "d": 1,
    "kernel": {"family": "zero", "params": {}, "delta": 0.0},
    "rho0": {"kind": "cosine", "amplitude": 0.5, "mode": 1},
    "drift": {"kind": "zero"},
    "replicas": 1,
    "checkpoint_times": [],
    "mode": "particle",
    "p": 1.0,
    "sinkhorn_reg": 1e-2,
    "couple_delta": False,
    "grid_steps": 60,
}


def _check(problems, cond, message):
    if not cond:
        problems.append(message)
    return cond


def resolve_config(command: str, raw: dict) -> dict:
    """Validate a raw config dict and fill defaults; raises ConfigError."""
    problems = []
    allowed = _COMMON_KEYS | _COMMAND_KEYS[command]
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    for key in sorted(raw):
        if key not in allowed:
            problems.append(f"unknown field {key!r}")
    cfg = {k: raw[k] for k in raw if k in allowed}

    _check(problems, cfg.get("schema_version", 1) == 1, "schema_version: must be 1")
    d = cfg.get("d", _DEFAULTS["d"])
    _check(problems, d in (1, 2), "d: must be 1 or 2")

    kernel = cfg.get("kernel", _DEFAULTS["kernel"])
    if _check(problems, isinstance(kernel, dict), "kernel: must be an object"):
        extra = set(kernel) - {"family", "params", "delta"}
        for key in sorted(extra):
            problems.append(f"kernel: unknown field {key!r}")
        fam = kernel.get("family", "zero")
        if _check(
            problems,
            fam in _KERNEL_PARAM_KEYS,
            f"kernel.family: unknown family {fam!r}",
        ):
            params = kernel.get("params", {})
            if _check(problems, isinstance(params, dict), "kernel.params: must be an object"):
                bad = set(params) - _KERNEL_PARAM_KEYS[fam]
                for key in sorted(bad):
                    problems.append(f"kernel.params: {key!r} not valid for family {fam!r}")
            if fam == "biot_savart_2d" and d != 2:
                problems.append("kernel.family: biot_savart_2d requires d = 2")

    rho0 = cfg.get("rho0", _DEFAULTS["rho0"])
    if _check(problems, isinstance(rho0, dict), "rho0: must be an object"):
        kind = rho0.get("kind")
        _check(problems, kind in ("uniform", "cosine"), "rho0.kind: must be uniform or cosine")
        extra = set(rho0) - {"kind", "amplitude", "mode"}
        for key in sorted(extra):
            problems.append(f"rho0: unknown field {key!r}")
        if kind == "cosine":
            amp = rho0.get("amplitude", 0.5)
            _check(problems, isinstance(amp, (int, float)) and -1 < amp < 1,
                   "rho0.amplitude: must lie in (-1, 1)")

    drift = cfg.get("drift", _DEFAULTS["drift"])
    if _check(problems, isinstance(drift, dict), "drift: must be an object"):
        _check(problems, drift.get("kind", "zero") in ("zero", "gradient"),
               "drift.kind: must be zero or gradient")
        extra = set(drift) - {"kind", "amplitude", "mode"}
        for key in sorted(extra):
            problems.append(f"drift: unknown field {key!r}")

    if command in ("simulate", "solve-pde", "concentration", "entropy-sweep"):
        for key in ("T", "dt"):
            val = cfg.get(key)
            _check(problems, isinstance(val, (int, float)) and val and val > 0,
                   f"{key}: required positive number")
    if command == "simulate":
        _check(problems, isinstance(cfg.get("N"), int) and cfg.get("N", 0) >= 2,
               "N: required integer >= 2")
        reps = cfg.get("replicas", 1)
        _check(problems, isinstance(reps, int) and reps >= 1, "replicas: must be a positive integer")
    if command in ("concentration", "entropy-sweep"):
        nl = cfg.get("N_list")
        ok = isinstance(nl, list) and len(nl) >= 3 and all(isinstance(v, int) for v in nl)
        ok = ok and all(b > a for a, b in zip(nl, nl[1:]))
        _check(problems, ok, "N_list: required strictly increasing integer list, length >= 3")
        m = cfg.get("M")
        _check(problems, isinstance(m, int) and m >= 200, "M: required integer >= 200")
    if command == "concentration":
        el = cfg.get("epsilon_list")
        ok = isinstance(el, list) and el and all(
            isinstance(v, (int, float)) and v > 0 for v in el
        )
        _check(problems, ok, "epsilon_list: required list of positive reals")
        _check(problems, cfg.get("mode", "particle") in ("particle", "iid_baseline"),
               "mode: must be particle or iid_baseline")
        pval = cfg.get("p", 1.0)
        _check(problems, isinstance(pval, (int, float)) and pval >= 1, "p: must be >= 1")
    if command == "dv-check":
        mu = cfg.get("mu")
        ok = isinstance(mu, list) and 1 <= len(mu) <= 4 and all(
            isinstance(v, (int, float)) and v >= 0 for v in mu
        )
        _check(problems, ok, "mu: required probability vector with <= 4 entries")
        if ok:
            _check(problems, abs(sum(mu) - 1.0) <= 1e-12, "mu: must sum to 1")
        A = cfg.get("A")
        a_ok = isinstance(A, list) and A and all(isinstance(i, int) for i in A)
        _check(problems, a_ok, "A: required nonempty list of state indices")
        if a_ok and ok:
            _check(problems, all(0 <= i < len(mu) for i in A),
                   "A: indices must address states of mu")

    if problems:
        raise ConfigError(problems)

    resolved = {}
    for key in sorted(allowed):
        if key in cfg:
            resolved[key] = cfg[key]
        elif key in _DEFAULTS:
            resolved[key] = _DEFAULTS[key]
        elif key == "grid_n":
            resolved[key] = 256 if d == 1 else 128
        elif key == "bins":
            resolved[key] = 32 if d == 1 else 16
    return resolved


def _build_kernel(cfg: dict) -> KernelSpec:
    k = cfg["kernel"]
    params = k.get("params", {})
    return KernelSpec(
        family=k.get("family", "zero"),
        dim=cfg["d"],
        amplitude=float(params.get("amplitude", 1.0)),
        mode=int(params.get("mode", 1)),
        m_trunc=int(params.get("m_trunc", 64)),
        delta=float(k.get("delta", 0.0)),
    )


def _build_rho0(cfg: dict) -> GridDensity:
    r = cfg["rho0"]
    n, d = cfg["grid_n"], cfg["d"]
    if r["kind"] == "uniform":
        return uniform_density(n, d)
    return cosine_density(n, d, amplitude=float(r.get("amplitude", 0.5)),
                          mode=int(r.get("mode", 1)))


def _build_drift(cfg: dict) -> DriftSpec | None:
    dr = cfg["drift"]
    if dr.get("kind", "zero") == "zero":
        return None
    return DriftSpec(kind="gradient", amplitude=float(dr.get("amplitude", 1.0)),
                     mode=int(dr.get("mode", 1)))


def _write_manifest(cfg: dict, outdir: str) -> None:
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: dict, workers: int) -> int:
    outdir = cfg["output_dir"]
    params = SimParams(
        N=cfg["N"],
        T=float(cfg["T"]),
        dt=float(cfg["dt"]),
        seed=cfg["seed"],
        kernel=_build_kernel(cfg),
        drift=_build_drift(cfg),
        rho0=_build_rho0(cfg),
    )
    cols = "x1" if cfg["d"] == 1 else "x1,x2"
    path = os.path.join(outdir, "positions.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"replica,particle_index,{cols}\n")
        for rep in range(cfg["replicas"]):
            final = simulate(params, replica=rep)
            for i, row in enumerate(final.positions):
                coords = ",".join(f"{v:.17g}" for v in row)
                fh.write(f"{rep},{i},{coords}\n")
    _write_manifest(cfg, outdir)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_solve_pde(cfg: dict, workers: int) -> int:
    outdir = cfg["output_dir"]
    result = solve_pde(
        _build_rho0(cfg),
        _build_kernel(cfg),
        _build_drift(cfg),
        float(cfg["T"]),
        float(cfg["dt"]),
        checkpoint_times=cfg["checkpoint_times"],
    )
    paths = []
    for rho in result.checkpoints:
        path = os.path.join(outdir, f"density_t{rho.time:.6f}.csv")
        write_density_csv(rho, path)
        paths.append(path)
    summary = {
        "min_density": result.min_density,
        "max_density": result.max_density,
        "clamp_events": result.clamp_events,
        "checkpoints": [os.path.basename(p) for p in paths],
    }
    with open(os.path.join(outdir, "solve_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(cfg, outdir)
    print(f"wrote {len(paths)} checkpoint(s); min density {result.min_density:.6g}")
    return EXIT_OK


def _plan_from_config(cfg: dict, want_eps: bool) -> ExperimentPlan:
    return ExperimentPlan(
        kernel=_build_kernel(cfg),
        T=float(cfg["T"]),
        dt=float(cfg["dt"]),
        N_list=tuple(cfg["N_list"]),
        epsilon_list=tuple(cfg["epsilon_list"]) if want_eps else (0.1, 0.2, 0.3),
        p=float(cfg.get("p", 1.0)),
        M=cfg["M"],
        mode=cfg.get("mode", "particle"),
        seed=cfg["seed"],
        drift=_build_drift(cfg),
        rho0=_build_rho0(cfg),
        grid_n=cfg["grid_n"],
        bins=cfg.get("bins"),
        sinkhorn_reg=float(cfg.get("sinkhorn_reg", 1e-2)),
        couple_delta=bool(cfg.get("couple_delta", False)),
    )


def cmd_concentration(cfg: dict, workers: int) -> int:
    outdir = cfg["output_dir"]
    plan = _plan_from_config(cfg, want_eps=True)
    harness = ConcentrationHarness(plan)
    records = harness.run_all(workers=workers)
    emit_results(records, os.path.join(outdir, "records.csv"))
    fits, skipped = fit_all_rates(records)
    payload = {
        "fits": [
            {
                "mode": f.mode,
                "p": f.p,
                "d": plan.dim,
                "epsilon": f.epsilon,
                "slope": f.slope,
                "r2": f.r2,
                "a_p": f.a_p_value,
                "n_cells": f.n_cells,
            }
            for f in fits
        ],
        "skipped": {f"{eps:.17g}": cells for eps, cells in skipped.items()},
    }
    with open(os.path.join(outdir, "rate_fits.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(cfg, outdir)
    print(f"wrote {len(records)} cells, {len(fits)} rate fit(s)")
    return EXIT_OK


def cmd_entropy_sweep(cfg: dict, workers: int) -> int:
    outdir = cfg["output_dir"]
    plan = _plan_from_config(cfg, want_eps=False)
    sweep = entropy_decay_sweep(plan, workers=workers)
    path = os.path.join(outdir, "entropy_sweep.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("N,kl_estimate\n")
        for N, kl in sweep.entries:
            fh.write(f"{N},{kl:.17g}\n")
    with open(os.path.join(outdir, "entropy_fit.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "slope": None if math.isnan(sweep.slope) else sweep.slope,
                "excluded_N": list(sweep.excluded),
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    _write_manifest(cfg, outdir)
    print(f"wrote {path}; log-log slope {sweep.slope:.4f}")
    return EXIT_OK


def cmd_dv_check(cfg: dict, workers: int) -> int:
    outdir = cfg["output_dir"]
    mu = np.array(cfg["mu"], dtype=float)
    if float(mu[[i for i in cfg["A"] if 0 <= i < len(mu)]].sum()) <= 0:
        _write_manifest(cfg, outdir)
        print("lhs = +inf (the target set carries no mass); verdict: infinite")
        return EXIT_INFINITE
    result = dv_check(mu, cfg["A"], grid_steps=cfg["grid_steps"])
    gap = result.gap
    print(f"lhs  = {result.lhs:.12g}")
    print(f"rhs  = {result.rhs:.12g}")
    print(f"gap  = {gap:.3e}")
    with open(os.path.join(outdir, "dv_report.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "lhs": result.lhs,
                "rhs": result.rhs,
                "gap": gap,
                "scan_minimum": result.scan_minimum,
                "refined_minimum": result.refined_minimum,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    _write_manifest(cfg, outdir)
    return EXIT_OK if gap <= 1e-6 else EXIT_VERIFICATION


def cmd_kernel_info(cfg: dict, workers: int) -> int:
    outdir = cfg["output_dir"]
    spec = _build_kernel(cfg)
    n = max(cfg["grid_n"], 2 * spec.max_mode + 2)
    V = primitive_matrix(spec)
    info = {
        "family": spec.family,
        "dim": spec.dim,
        "delta": spec.delta,
        "max_mode": spec.max_mode,
        "sup_norm_grid": kernel_sup_norm_grid(spec, n),
        "l1_norm_grid": kernel_l1_norm_grid(spec, n),
        "wminus_norm_surrogate": wminus_norm_surrogate(V, min(n, 128)),
        "divergence_residual": primitive_divergence_residual(spec),
        "grid_n": n,
    }
    with open(os.path.join(outdir, "kernel_info.json"), "w", encoding="utf-8") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(cfg, outdir)
    for key, val in info.items():
        print(f"{key}: {val}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "solve-pde": cmd_solve_pde,
    "concentration": cmd_concentration,
    "entropy-sweep": cmd_entropy_sweep,
    "dv-check": cmd_dv_check,
    "kernel-info": cmd_kernel_info,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="chaoslab", description=__doc__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: machine parallelism)")
    parser.add_argument("--output-dir", default=None, help="override config output_dir")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    args = parser.parse_args(argv)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        cfg = resolve_config(args.command, raw)
    except ConfigError as err:
        for problem in err.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG

    # precedence: flag > environment > config
    env_seed = os.environ.get("CHAOSLAB_SEED")
    if args.seed is not None:
        cfg["seed"] = args.seed
    elif env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            print(f"config error: CHAOSLAB_SEED={env_seed!r} is not an integer",
                  file=sys.stderr)
            return EXIT_CONFIG
    if args.output_dir is not None:
        cfg["output_dir"] = args.output_dir
    os.makedirs(cfg["output_dir"], exist_ok=True)
    workers = args.workers if args.workers is not None else machine_workers()

    try:
        return _COMMANDS[args.command](cfg, workers)
    except (BlowUpError, SinkhornError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
