"""Command-line experiment runner.

Usage::

    chaosrough <experiment> [--config file.json] [--seed N] [--samples N]
               [--out dir] [--threads N]

Every run writes ``manifest.json`` (configuration with defaults filled in,
package versions, wall time, the claims tested), ``results.csv`` and
``report.json`` into the output directory.  Exit status is 0 when every
assertion holds, 2 when one fails and 1 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .analysis import rate_function, scaling_check, tail_scan
from .enhanced import draw_xi, enhance, translate, translation_growth
from .kernels import (
    KernelPath,
    brownian_kernel,
    brownian_product_kernel,
    check_assumptions,
    example_control,
    fbm_kernel,
    uniform_grid,
)
from .rde import jacobian, malliavin_rde, solve, affine_fields, tanh_fields
from .roughlift import (
    Level2Path,
    dyadic_convergence,
    kl_partial_sum,
    kl_second_moments,
    lift_piecewise_linear,
    normalized_monomial_basis,
    sample_kernel_paths,
)
from .symtensor import SymTensor

EXPERIMENTS = (
    "lift-converge",
    "kl-converge",
    "assumptions",
    "rde-verify",
    "malliavin-verify",
    "greedy-tail",
    "translation",
    "rate",
    "scaling",
)

DEFAULTS = {
    "kernel": {"name": "brownian", "n": 1, "grid_level": 6, "hurst": 0.5},
    "p": 2.5,
    "rho": 1.0,
    "alpha": 0.25,
    "eps": [1.0, 0.5, 0.25],
    "samples": None,
    "seed": 0,
}

SAMPLE_DEFAULTS = {
    "lift-converge": 200,
    "kl-converge": 0,
    "assumptions": 0,
    "rde-verify": 3,
    "malliavin-verify": 20,
    "greedy-tail": 10**4,
    "translation": 200,
    "rate": 32,
    "scaling": 20,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ config
def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def build_config(experiment: str, file_cfg: dict | None = None, seed=None, samples=None, out=None, threads=None) -> dict:
    """Merge defaults, the JSON file and command-line overrides, then validate."""
    if experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    cfg = _merge(DEFAULTS, file_cfg or {})
    cfg["experiment"] = experiment
    if seed is not None:
        cfg["seed"] = seed
    if samples is not None:
        cfg["samples"] = samples
    if cfg["samples"] is None:
        cfg["samples"] = SAMPLE_DEFAULTS[experiment]
    cfg["out"] = out or cfg.get("out") or f"runs/{experiment}"
    cfg["threads"] = threads or cfg.get("threads") or 1
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    kc = cfg["kernel"]
    if kc["name"] not in ("brownian", "product", "fbm", "square"):
        raise UsageError(f"unknown kernel {kc['name']!r}")
    if not isinstance(kc["grid_level"], int) or not 1 <= kc["grid_level"] <= 12:
        raise UsageError("kernel.grid_level must be an integer in [1, 12]")
    if kc["name"] == "product" and not 1 <= int(kc["n"]) <= 4:
        raise UsageError("kernel.n must lie in [1, 4] for product kernels")
    if kc["name"] == "fbm" and not 0 < kc["hurst"] < 1:
        raise UsageError("kernel.hurst must lie in (0, 1)")
    rho, p = float(cfg["rho"]), float(cfg["p"])
    if not 1 <= rho < 1.5:
        raise UsageError(f"rho must lie in [1, 3/2), got {rho}")
    if cfg["experiment"] in ("lift-converge", "greedy-tail", "translation", "scaling") and not p > 2 * rho:
        raise UsageError(f"need p > 2 rho, got p={p}, rho={rho}")
    if not cfg["alpha"] > 0:
        raise UsageError("alpha must be positive")
    if any(e <= 0 for e in cfg["eps"]):
        raise UsageError("eps values must be positive")
    if not isinstance(cfg["samples"], int) or cfg["samples"] < 0:
        raise UsageError("samples must be a non-negative integer")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise UsageError("seed must be a non-negative integer")
    if cfg["experiment"] == "greedy-tail" and cfg["samples"] < 1:
        raise UsageError("greedy-tail needs samples >= 1")


def make_kernel(kc: dict) -> KernelPath:
    M = 2 ** kc["grid_level"]
    name = kc["name"]
    if name == "brownian":
        return brownian_kernel(M)
    if name == "product":
        return brownian_product_kernel(int(kc["n"]), M)
    if name == "fbm":
        return fbm_kernel(float(kc["hurst"]), M)
    # second-chaos kernel t phi_1 (x) phi_1 on a one-dimensional space
    g = uniform_grid(M)
    return KernelPath(g, tensors=[SymTensor.monomial((0, 0), 1) * t for t in g], label="square")


# -------------------------------------------------------------- experiments
def _lift_converge(cfg, k):
    L = cfg["kernel"]["grid_level"]
    levels = cfg.get("levels") or list(range(min(3, L - 1), L + 1))
    res = dyadic_convergence(k, levels, p=cfg["p"], samples=cfg["samples"], seed=cfg["seed"], d=cfg.get("d", 2))
    rows = [{"level": l, "mean": m, "se": s} for l, m, s in zip(res["levels"], res["mean"], res["se"])]
    return rows, res, {"decreasing": bool(res["decreasing"])}, ["piecewise-linear dyadic lifts form a Cauchy sequence in p-variation"]


def _kl_converge(cfg, k):
    basis = normalized_monomial_basis(k.order, k.dim)
    full = kl_second_moments(k)
    prev = None
    rows, mono, bounded = [], True, True
    mask = np.triu(np.ones_like(full["level1"], dtype=bool), 1)
    for K in range(len(basis) + 1):
        m = kl_second_moments(kl_partial_sum(k, basis, K))
        for key in ("level1", "level2_cross"):
            gap = full[key][mask] - m[key][mask]
            bounded &= bool(np.all(gap >= -1e-12))
            if prev is not None:
                mono &= bool(np.all(m[key][mask] - prev[key][mask] >= -1e-12))
        rows.append({"K": K, "max_level1_gap": float(np.max(full["level1"] - m["level1"])), "max_level2_gap": float(np.max(full["level2_cross"] - m["level2_cross"]))})
        prev = m
    report = {"basis_size": len(basis), "rows": rows}
    return rows, report, {"nondecreasing": mono, "bounded_by_full": bounded}, ["Karhunen-Loeve truncations are projections: second moments increase to the full ones"]


def _assumptions(cfg, k):
    control = example_control(k, cfg["rho"]) if k.is_factored and k.order >= 2 else None
    rep = check_assumptions(k, cfg["rho"], control=control, seed=cfg["seed"])
    d = rep.to_dict()
    rows = [{"check": "covariance", "pass": d["assumption1_pass"], "max_ratio": d["assumption1_max_ratio"]}]
    for r, v in d["assumption2_max_ratio"].items():
        rows.append({"check": f"contraction_r{r}", "pass": d["assumption2_pass"], "max_ratio": v})
    checks = {}
    if k.order == 1 or rep.assumption2_pass is None:
        checks["covariance"] = bool(rep.assumption1_pass)
    else:
        # for higher chaos the contraction condition replaces the covariance one;
        # the covariance condition is imposed on each Gaussian factor instead
        checks["contraction"] = bool(rep.assumption2_pass)
        if k.is_factored:
            for i, g in enumerate(k.factors):
                frep = check_assumptions(KernelPath(k.grid, factors=[g]), cfg["rho"])
                rows.append({"check": f"factor{i}_covariance", "pass": frep.assumption1_pass, "max_ratio": frep.assumption1_max_ratio})
                checks[f"factor{i}_covariance"] = bool(frep.assumption1_pass)
    d["control"] = "product-of-factors control" if control is not None else "covariance rho-variation control"
    return rows, d, checks, ["2D rho-variation control of the covariance", "contraction control of the kernels"]


def _rde_verify(cfg, k):
    V = affine_fields(np.ones((1, 1, 1)))
    rows = []
    N = 2 ** cfg.get("rde_grid_level", 10)
    t = np.linspace(0, 1, N + 1)
    err = abs(solve(lift_piecewise_linear(t, t), V, [1.0]).Y[-1, 0] - math.e)
    rows.append({"check": "exp_deterministic", "value": err, "tol": 1e-6, "pass": err <= 1e-6})
    kb = brownian_kernel(N)
    substeps = cfg.get("substeps", 64)
    worst = 0.0
    for X in sample_kernel_paths(kb, 1, cfg["samples"], cfg["seed"]):
        sol = solve(lift_piecewise_linear(X, kb.grid), V, [1.0], substeps=substeps)
        worst = max(worst, float(np.max(np.abs(sol.Y[:, 0] - np.exp(X[:, 0])))))
    rows.append({"check": "exp_pathwise", "value": worst, "tol": 1e-5, "pass": worst <= 1e-5})
    rng = np.random.default_rng(cfg["seed"])
    W = tanh_fields(rng.normal(size=(2, 2, 2)), rng.normal(size=(2, 2)))
    X = sample_kernel_paths(brownian_kernel(128), 2, 1, cfg["seed"])[0]
    x = lift_piecewise_linear(X, uniform_grid(128))
    y0 = np.array([0.3, -0.4])
    J = jacobian(x, W, y0).J
    eps, rel = 1e-5, 0.0
    for i in range(2):
        b = np.eye(2)[i]
        fd = (solve(x, W, y0 + eps * b).Y - solve(x, W, y0 - eps * b).Y) / (2 * eps)
        rel = max(rel, float(np.max(np.abs(fd - J @ b)) / np.max(np.abs(J @ b))))
    rows.append({"check": "jacobian_fd", "value": rel, "tol": 1e-3, "pass": rel <= 1e-3})
    checks = {r["check"]: bool(r["pass"]) for r in rows}
    return rows, {"rows": rows, "substeps": substeps, "N": N}, checks, ["exponential closed form of dY = Y dX", "Jacobian of the flow"]


def _malliavin_verify(cfg, k):
    rng = np.random.default_rng(cfg["seed"])
    e, d = 2, 2
    V = tanh_fields(rng.normal(size=(e, d, e)), rng.normal(size=(e, d)))
    y0 = np.array([0.3, -0.2])
    eps = cfg.get("fd_eps", 1e-4)
    max_order = 1 if k.order > 1 else None
    rows = []
    for i in range(cfg["samples"]):
        s = enhance(k, draw_xi(d, k.dim, cfg["seed"], i), max_order=max_order)
        h = rng.normal(size=(d, k.dim))
        h /= np.linalg.norm(h)
        sol = malliavin_rde(s, V, y0, k=1)
        plus = solve(Level2Path(s.grid, translate(s, h, eps).values), V, y0).Y
        minus = solve(Level2Path(s.grid, translate(s, h, -eps).values), V, y0).Y
        fd = (plus - minus) / (2 * eps)
        ex = sol.pair(h, 1)
        rel = float(np.max(np.abs(fd - ex)) / max(np.max(np.abs(ex)), 1e-300))
        rows.append({"sample": i, "rel_err": rel})
    worst = max(r["rel_err"] for r in rows) if rows else 0.0
    return rows, {"max_rel_err": worst, "eps": eps, "tol": 1e-2}, {"malliavin_fd": worst <= 1e-2}, ["first Malliavin derivative of the RDE solution equals the directional derivative under Cameron-Martin translation"]


def _greedy_tail(cfg, k):
    res = tail_scan(k, cfg["alpha"], cfg["p"], cfg.get("M_list"), samples=cfg["samples"], seed=cfg["seed"], invariants=True)
    rows = [
        {"M": M, "survival": s, "exceed": e, "wilson_low": lo, "wilson_high": hi}
        for M, s, e, lo, hi in zip(res["M"], res["survival"], res["exceed"], res["wilson_low"], res["wilson_high"])
    ]
    report = {key: v for key, v in res.items() if key != "counts"}
    checks = {
        "survival_monotone": res["monotone"],
        "count_bound": res["count_bound_violations"] == 0,
        "accumulated_bound": res["accumulated_bound_violations"] == 0,
    }
    return rows, report, checks, ["alpha N_alpha <= ||X||^p", "M_alpha <= alpha (2 N_alpha + 1)", "stretched-exponential tail of N_alpha (qualitative)"]


def _translation(cfg, k):
    d = cfg.get("d", 1)
    h = np.ones((d, k.dim)) / math.sqrt(d * k.dim)
    r_list = cfg.get("r_list", [1, 2, 4, 8, 16])
    res = translation_growth(k, h, r_list, p=cfg["p"], samples=cfg["samples"], seed=cfg["seed"], d=d)
    rows = [{"r": r, "mean_ratio": m, "se": s} for r, m, s in zip(res["r"], res["mean_ratio"], res["se"])]
    bound = res["exponent"] + 0.3
    return rows, res, {"slope_bound": bool(res["slope"] <= bound)}, ["polynomial growth of the enhanced norm under translation"]


def _rate(cfg, k):
    c = float(cfg.get("c", 1.0))
    x = c * k.grid
    res = rate_function(k, x, starts=max(cfg["samples"], 1), seed=cfg["seed"])
    rows = [{"component": i, "value": 0.5 * float(h @ h), "residual": res.residual} for i, h in enumerate(res.h_star)]
    report = res.to_dict()
    report["c"] = c
    checks = {}
    if "expected" in cfg:
        checks["value"] = bool(res.feasible and abs(res.value - cfg["expected"]) <= cfg.get("tol", 1e-4))
    if "expect_status" in cfg:
        checks["status"] = res.status == cfg["expect_status"]
    if not checks:
        checks["finite"] = bool(np.isfinite(res.value))
    return rows, report, checks, ["rate function as minimal Cameron-Martin energy"]


def _scaling(cfg, k):
    res = scaling_check(k, cfg["eps"], samples=cfg["samples"], seed=cfg["seed"], p=cfg["p"], alpha=cfg["alpha"])
    checks = {"homogeneity": res["max_err"] <= 1e-12, "greedy_monotone": res["N_monotone"]}
    return res["rows"], res, checks, ["homogeneity of the lift under eps^n dilation"]


RUNNERS = {
    "lift-converge": _lift_converge,
    "kl-converge": _kl_converge,
    "assumptions": _assumptions,
    "rde-verify": _rde_verify,
    "malliavin-verify": _malliavin_verify,
    "greedy-tail": _greedy_tail,
    "translation": _translation,
    "rate": _rate,
    "scaling": _scaling,
}


# ---------------------------------------------------------------- output
def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _write_csv(path, rows):
    keys = []
    for r in rows:
        for key in r:
            if key not in keys:
                keys.append(key)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({key: repr(float(v)) if isinstance(v, (float, np.floating)) else v for key, v in _plain(r).items()})


def _versions() -> dict:
    import numba
    import scipy

    return {"chaosrough": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__, "python": platform.python_version()}


def run(cfg: dict) -> int:
    """Run one validated configuration and write its artifacts; returns the exit status."""
    start = time.perf_counter()
    k = make_kernel(cfg["kernel"])
    rows, report, checks, claims = RUNNERS[cfg["experiment"]](cfg, k)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    failed = [name for name, ok in checks.items() if not ok]
    report = {"experiment": cfg["experiment"], "checks": checks, "failed": failed, "result": report}
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(_plain(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_csv(os.path.join(out, "results.csv"), rows)
    manifest = {
        "config": cfg,
        "kernel": repr(k),
        "claims": claims,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - start,
        "outputs": ["results.csv", "report.json"],
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(_plain(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    if failed:
        print(f"assertion failed: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = _Parser(prog="chaosrough", description="Reproducible experiments for chaos rough paths.")
    parser.add_argument("experiment", help="one of: " + ", ".join(EXPERIMENTS))
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--samples", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int, help="numba worker threads (results do not depend on it)")
    args = parser.parse_args(argv)
    try:
        file_cfg = None
        if args.config:
            try:
                with open(args.config) as fh:
                    file_cfg = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config: {exc}") from exc
        cfg = build_config(args.experiment, file_cfg, args.seed, args.samples, args.out, args.threads)
    except UsageError as exc:
        print(f"chaosrough: error: {exc}", file=sys.stderr)
        return 1
    if cfg["threads"] > 1:
        import numba

        numba.set_num_threads(min(cfg["threads"], numba.config.NUMBA_NUM_THREADS))
    try:
        return run(cfg)
    except ValueError as exc:
        print(f"chaosrough: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
