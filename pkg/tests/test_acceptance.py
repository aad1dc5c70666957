"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also repeated in the terminal summary.
"""

import itertools
import math

import numpy as np
import pytest

from conftest import random_symtensor, record_criterion

from chaosrough._rng import iter_gaussian_batches
from chaosrough.analysis import rate_function, tail_scan
from chaosrough.chaos import ChaosVariable, eval_sum, inner_dk, malliavin, product_expand
from chaosrough.enhanced import draw_xi, enhance, lift_enhanced, translate, translation_growth
from chaosrough.kernels import KernelPath, brownian_kernel, brownian_product_kernel, uniform_grid
from chaosrough.rde import affine_fields, jacobian, malliavin_rde, solve, tanh_fields
from chaosrough.roughlift import (
    Level2Path,
    chen_compose,
    dyadic_convergence,
    kl_partial_sum,
    kl_second_moments,
    lift_piecewise_linear,
    normalized_monomial_basis,
    p_variation,
    sample_kernel_paths,
)
from chaosrough.symtensor import SymTensor, inner

pytestmark = pytest.mark.acceptance


def _random_rough_path(rng, K, D):
    d = rng.normal(size=(K - 1, D))
    X = np.vstack([np.zeros(D), d.cumsum(axis=0)])
    area = rng.normal(size=(K - 1, D, D))
    l2 = 0.5 * d[:, :, None] * d[:, None, :] + 0.5 * (area - area.transpose(0, 2, 1))
    return Level2Path(np.linspace(0, 1, K), X, l2)


# --------------------------------------------------------------------- 1
def test_c01_algebra_exactness():
    rng = np.random.default_rng(101)
    errs = {}
    # product formula, pointwise at random samples
    e = 0.0
    for _ in range(100):
        n, m, M = rng.integers(0, 4), rng.integers(0, 4), rng.integers(1, 9)
        a = ChaosVariable(random_symtensor(rng, n, M))
        b = ChaosVariable(random_symtensor(rng, m, M))
        xi = rng.normal(size=(5, M))
        lhs = a.evaluate(xi) * b.evaluate(xi)
        e = max(e, float(np.max(np.abs(lhs - eval_sum(product_expand(a, b), xi)))))
    errs["product"] = e
    # Chen's relation against direct segment sums
    e = 0.0
    for _ in range(100):
        K, D = rng.integers(3, 9), rng.integers(1, 4)
        x = _random_rough_path(rng, K, D)
        s, t, u = sorted(rng.choice(K, size=3, replace=False))
        X1, A1 = x.increment(s, t)
        X2, A2 = x.increment(t, u)
        _, A = x.increment(s, u)
        e = max(e, float(np.max(np.abs(A - (A1 + A2 + np.outer(X1, X2))))))
        y = chen_compose(x.restrict_segment(0, t), x.restrict_segment(t, K - 1))
        e = max(e, float(np.max(np.abs(y.cumulative_level2() - x.cumulative_level2()))))
    errs["chen"] = e
    # geometric identity Sym(XX) = 1/2 X (x) X for lifts
    e = 0.0
    for i in range(100):
        if i % 2:
            n = int(rng.integers(1, 3))
            k = brownian_product_kernel(n, 4)
            x = lift_enhanced(enhance(k, rng.normal(size=(1, k.dim))))
        else:
            x = lift_piecewise_linear(rng.normal(size=(int(rng.integers(3, 9)), 3)))
        for s in range(x.n_nodes):
            for t in range(s + 1, x.n_nodes):
                X, A = x.increment(s, t)
                e = max(e, float(np.max(np.abs(0.5 * (A + A.T) - 0.5 * np.outer(X, X)))))
    errs["geometric"] = e
    # translation group law T_{h2} T_{h1} = T_{h1 + h2}
    e = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        k = brownian_product_kernel(n, int(rng.integers(2, 8 // n + 1)))
        s = enhance(k, rng.normal(size=(1, k.dim)))
        h1, h2 = rng.normal(size=(2, 1, k.dim))
        a = translate(translate(s, h1, 1.0), h2, 1.0)
        b = translate(s, h1 + h2, 1.0)
        for la, lb in zip(a.layers, b.layers):
            e = max(e, float(np.max(np.abs(la - lb))))
    errs["translate"] = e
    worst = max(errs.values())
    ok = worst <= 1e-8
    record_criterion(1, "algebra exactness", ok, ", ".join(f"{k}={v:.1e}" for k, v in errs.items()) + " (tol 1e-8)")
    assert ok


# --------------------------------------------------------------------- 2
def test_c02_isometry_orthogonality():
    rng = np.random.default_rng(202)
    M, S = 4, 10**6
    vars_ = {n: [ChaosVariable(random_symtensor(rng, n, M, density=1.0)) for _ in range(2)] for n in (1, 2, 3)}
    pairs = [(n, 0, n, 1) for n in (1, 2, 3)] + [(1, 0, 2, 0), (1, 0, 3, 0), (2, 0, 3, 1)]
    sums = np.zeros((len(pairs), 2))
    for _, xi in iter_gaussian_batches(7, S, M, batch=2**17):
        vals = {(n, i): vars_[n][i].evaluate(xi) for n in vars_ for i in range(2)}
        for j, (n, i, m, l) in enumerate(pairs):
            prod = vals[(n, i)] * vals[(m, l)]
            sums[j] += [prod.sum(), (prod ** 2).sum()]
    ok, details = True, []
    for j, (n, i, m, l) in enumerate(pairs):
        mean = sums[j, 0] / S
        se = math.sqrt((sums[j, 1] / S - mean ** 2) / S)
        exact = math.factorial(n) * inner(vars_[n][i].kernel, vars_[m][l].kernel) if n == m else 0.0
        z = abs(mean - exact) / se
        ok &= z <= 3
        details.append(f"({n},{m}) z={z:.2f}")
    record_criterion(2, "isometry and orthogonality", ok, "; ".join(details) + " (<= 3 SE, 1e6 samples)")
    assert ok


# --------------------------------------------------------------------- 3
def test_c03_derivative_inner_products():
    rng = np.random.default_rng(303)
    M = 4
    ok, details = True, []
    for n in (2, 3):
        for k in (1, 2):
            f = random_symtensor(rng, n, M, density=1.0)
            g = random_symtensor(rng, n, M, density=1.0)
            Df = malliavin(ChaosVariable(f), k)
            Dg = malliavin(ChaosVariable(g), k)
            terms = inner_dk(f, g, k)
            xi = rng.normal(size=(50, M))
            direct = np.sum((Df.evaluate(xi) * Dg.evaluate(xi)).reshape(50, -1), axis=1)
            perr = float(np.max(np.abs(direct - eval_sum(terms, xi))))
            total = s2 = 0.0
            S = 200_000
            for _, x in iter_gaussian_batches(n * 10 + k, S, M, batch=2**15):
                v = np.sum((Df.evaluate(x) * Dg.evaluate(x)).reshape(x.shape[0], -1), axis=1)
                total += v.sum()
                s2 += (v ** 2).sum()
            mean = total / S
            se = math.sqrt((s2 / S - mean ** 2) / S)
            exact = math.factorial(n) ** 2 / math.factorial(n - k) * inner(f, g)
            z = abs(mean - exact) / se
            ok &= perr <= 1e-8 and z <= 3
            details.append(f"n={n},k={k}: pointwise {perr:.1e}, z={z:.2f}")
    record_criterion(3, "derivative inner-product decomposition", ok, "; ".join(details))
    assert ok


# --------------------------------------------------------------------- 4
def _exhaustive(x, p):
    K = x.n_nodes
    best1 = best2 = 0.0
    for mask in range(2 ** (K - 2)):
        pts = [0] + [c + 1 for c in range(K - 2) if mask >> c & 1] + [K - 1]
        s1 = s2 = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            X, XX = x.increment(a, b)
            s1 += np.linalg.norm(X) ** p
            s2 += np.linalg.norm(XX) ** (p / 2)
        best1, best2 = max(best1, s1), max(best2, s2)
    return best1, best2


def test_c04_pvariation_exhaustive():
    rng = np.random.default_rng(404)
    worst = 0.0
    for i in range(60):
        K = int(rng.integers(2, 11))
        x = _random_rough_path(rng, K, 2) if i % 2 else lift_piecewise_linear(rng.normal(size=(K, 2)).cumsum(axis=0))
        p = float(rng.choice([1.0, 2.1, 2.5, 3.5]))
        r = p_variation(x, p)
        s1, s2 = _exhaustive(x, p)
        worst = max(worst, abs(r.level1 ** p - s1) / max(s1, 1e-300), abs(r.level2 ** (p / 2) - s2) / max(s2, 1e-300))
    ok = worst <= 1e-12
    record_criterion(4, "p-variation DP vs exhaustive search", ok, f"60 paths, max rel diff {worst:.1e}")
    assert ok


# --------------------------------------------------------------------- 5
@pytest.mark.slow
def test_c05_dyadic_convergence():
    ok, details = True, []
    for name, k in [("brownian", brownian_kernel(2 ** 8)), ("product n=2", brownian_product_kernel(2, 2 ** 8))]:
        res = dyadic_convergence(k, range(3, 9), p=2.5, samples=200, seed=5)
        ok &= res["decreasing"]
        means = ", ".join(f"{m:.3g}" for m in res["mean"][:-1])
        details.append(f"{name}: E d^2 = [{means}] decreasing={res['decreasing']}")
    record_criterion(5, "dyadic lift convergence", ok, "; ".join(details))
    assert ok


# --------------------------------------------------------------------- 6
def test_c06_kl_projection():
    ok, details = True, []
    for name, k in [("brownian M=8", brownian_kernel(8)), ("product n=2 M=3", brownian_product_kernel(2, 3))]:
        basis = normalized_monomial_basis(k.order, k.dim)
        full = kl_second_moments(k)
        mask = np.triu(np.ones_like(full["level1"], dtype=bool), 1)
        prev = None
        worst_inc = worst_bound = 0.0
        for K in range(len(basis) + 1):
            m = kl_second_moments(kl_partial_sum(k, basis, K))
            for key in ("level1", "level2_cross"):
                worst_bound = max(worst_bound, float(np.max(m[key][mask] - full[key][mask])))
                if prev is not None:
                    worst_inc = max(worst_inc, float(np.max(prev[key][mask] - m[key][mask])))
            prev = m
        gap = max(float(np.max(np.abs(prev[key] - full[key]))) for key in full)
        good = worst_inc <= 1e-12 and worst_bound <= 1e-12 and gap <= 1e-12
        ok &= good
        details.append(f"{name}: max decrease {worst_inc:.1e}, max excess {worst_bound:.1e}, full-basis gap {gap:.1e}")
    record_criterion(6, "KL projection monotonicity", ok, "; ".join(details))
    assert ok


# --------------------------------------------------------------------- 7
def test_c07_rde_closed_forms():
    V = affine_fields(np.ones((1, 1, 1)))
    N = 2 ** 10
    t = np.linspace(0, 1, N + 1)
    det = abs(solve(lift_piecewise_linear(t, t), V, [1.0]).Y[-1, 0] - math.e)
    k = brownian_kernel(N)
    path = 0.0
    for X in sample_kernel_paths(k, 1, 5, seed=71):
        sol = solve(lift_piecewise_linear(X, k.grid), V, [1.0], substeps=64)
        path = max(path, float(np.max(np.abs(sol.Y[:, 0] - np.exp(X[:, 0])))))
    rng = np.random.default_rng(77)
    W = tanh_fields(rng.normal(size=(2, 2, 2)), rng.normal(size=(2, 2)))
    x = lift_piecewise_linear(sample_kernel_paths(brownian_kernel(256), 2, 1, seed=72)[0], uniform_grid(256))
    y0 = np.array([0.3, -0.4])
    J = jacobian(x, W, y0).J
    eps, jac = 1e-5, 0.0
    for i in range(2):
        b = np.eye(2)[i]
        fd = (solve(x, W, y0 + eps * b).Y - solve(x, W, y0 - eps * b).Y) / (2 * eps)
        jac = max(jac, float(np.max(np.abs(fd - J @ b)) / np.max(np.abs(J @ b))))
    ok = det <= 1e-6 and path <= 1e-5 and jac <= 1e-3
    record_criterion(7, "RDE closed forms", ok, f"|Y_1-e|={det:.1e} (1e-6), pathwise {path:.1e} (1e-5), Jacobian FD rel {jac:.1e} (1e-3)")
    assert ok


# --------------------------------------------------------------------- 8
@pytest.mark.slow
def test_c08_malliavin_vs_translation():
    rng = np.random.default_rng(88)
    e, d = 2, 2
    V = tanh_fields(rng.normal(size=(e, d, e)), rng.normal(size=(e, d)))
    y0 = np.array([0.3, -0.2])
    eps = 1e-4
    ok, details = True, []
    for name, k, max_order in [("n=1", brownian_kernel(2 ** 8), None), ("n=2", brownian_product_kernel(2, 2 ** 8), 1)]:
        worst = 0.0
        for i in range(20):
            s = enhance(k, draw_xi(d, k.dim, 8, i), max_order=max_order)
            h = rng.normal(size=(d, k.dim))
            h /= np.linalg.norm(h)
            ex = malliavin_rde(s, V, y0, k=1).pair(h, 1)
            plus = solve(Level2Path(s.grid, translate(s, h, eps).values), V, y0).Y
            minus = solve(Level2Path(s.grid, translate(s, h, -eps).values), V, y0).Y
            fd = (plus - minus) / (2 * eps)
            worst = max(worst, float(np.max(np.abs(fd - ex)) / np.max(np.abs(ex))))
        ok &= worst <= 1e-2
        details.append(f"{name}: max rel err {worst:.1e}")
    record_criterion(8, "Malliavin RDE vs translation FD", ok, "; ".join(details) + " (tol 1e-2, 20 samples each)")
    assert ok


# ------------------------------------------------------------------ 9, 11
_TAILS = {}


def _tail(name):
    if name not in _TAILS:
        if name == "n1":
            _TAILS[name] = tail_scan(brownian_kernel(32), 0.1, 2.5, samples=10**4, seed=91, invariants=True)
        else:
            _TAILS[name] = tail_scan(brownian_product_kernel(2, 16), 0.1, 2.5, samples=10**4, seed=92, invariants=True)
    return _TAILS[name]


@pytest.mark.slow
def test_c09_greedy_invariants():
    ok, details = True, []
    for name in ("n1", "n2"):
        r = _tail(name)
        v1, v2 = r["count_bound_violations"], r["accumulated_bound_violations"]
        ok &= v1 == 0 and v2 == 0
        details.append(f"{name}: {r['samples']} samples, violations {v1}/{v2}")
    record_criterion(9, "greedy invariants", ok, "; ".join(details))
    assert ok


@pytest.mark.slow
def test_c11_tail_shape():
    ok, details = True, []
    for name in ("n1", "n2"):
        r = _tail(name)
        good = (not r["degenerate"]) and r["slope"] < 0 and r["r2"] >= 0.8
        ok &= good
        details.append(f"{name}: slope {r['slope']:.3f}, R^2 {r['r2']:.3f} on {r['fit_points']} bins")
    record_criterion(11, "tail shape (qualitative)", ok, "; ".join(details))
    assert ok


# -------------------------------------------------------------------- 10
@pytest.mark.slow
def test_c10_translation_growth():
    p = 2.5
    ok, details = True, []
    for name, k in [("n=1", brownian_kernel(8)), ("n=2", brownian_product_kernel(2, 8))]:
        h = np.ones((1, k.dim)) / math.sqrt(k.dim)
        res = translation_growth(k, h, [2, 4, 8, 16], p=p, samples=200, seed=10)
        bound = k.order * p + p / 2 + 0.3
        ok &= res["slope"] <= bound
        details.append(f"{name}: slope {res['slope']:.3f} <= {bound:.2f}")
    record_criterion(10, "translation growth", ok, "; ".join(details))
    assert ok


# -------------------------------------------------------------------- 12
def test_c12_rate_function():
    k = brownian_kernel(16)
    res = rate_function(k, k.grid, starts=8)
    errs = [abs(res.value - 0.5)]
    good = res.feasible and errs[0] <= 1e-4
    g = uniform_grid(8)
    sq = KernelPath(g, tensors=[SymTensor.monomial((0, 0), 2) * t for t in g])
    for c in (0.5, 1.0, 2.0):
        r = rate_function(sq, c * g, starts=8)
        errs.append(abs(r.value - c / 2))
        good &= r.feasible and errs[-1] <= 1e-4
    neg = rate_function(sq, -0.5 * g, starts=8)
    good &= neg.status == "infeasible"
    record_criterion(12, "rate function", good, f"max |I - exact| {max(errs):.1e} (1e-4), c=-0.5 status {neg.status}")
    assert good
