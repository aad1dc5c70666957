import itertools
import math

import numpy as np
import pytest

from chaosrough.chaos import ChaosVariable, sample_gaussian
from chaosrough.kernels import (
    Control2D,
    KernelPath,
    brownian_kernel,
    brownian_product_kernel,
    check_assumptions,
    covariance,
    covariance_matrix,
    deterministic_kernel,
    example_control,
    fbm_kernel,
    hilbert_variation,
    product_kernel,
    rect_increment,
    rect_increments,
    uniform_grid,
    variation_2d,
)
from chaosrough.symtensor import SymTensor, inner


def brute_variation_2d(D, rho):
    """Enumerate every pair of grid partitions explicitly."""
    nr, nc = D.shape

    def parts(n):
        for mask in range(2 ** (n - 1)):
            yield [0] + [c + 1 for c in range(n - 1) if mask >> c & 1] + [n]

    best = 0.0
    for rc in parts(nr):
        for cc in parts(nc):
            tot = 0.0
            for a, b in zip(rc[:-1], rc[1:]):
                for c, d in zip(cc[:-1], cc[1:]):
                    tot += abs(D[a:b, c:d].sum()) ** rho
            best = max(best, tot)
    return best ** (1 / rho)


class TestBrownian:
    def test_inner_products(self):
        k = brownian_kernel(4)
        assert inner(k.kernel_at(0.5), k.kernel_at(0.5)) == pytest.approx(0.5)
        assert inner(k.kernel_at(0.25), k.kernel_at(0.75)) == pytest.approx(0.25)

    def test_increment_support(self):
        k = brownian_kernel(8)
        inc = k.increment(k.node_index(0.25), k.node_index(0.625))
        assert set(i for (i,) in inc.coeffs) == {2, 3, 4}

    def test_covariance_is_min(self):
        grid = np.array([0, 0.1, 0.35, 0.5, 0.9, 1.0])
        k = brownian_kernel(5, grid)
        R = covariance_matrix(k)
        np.testing.assert_allclose(R, np.minimum.outer(grid, grid), atol=1e-14)
        assert covariance(k, 0.35, 0.9) == pytest.approx(0.35)
        assert covariance(k, 0.0, 0.9) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            brownian_kernel(1)
        with pytest.raises(ValueError):
            brownian_kernel(4, uniform_grid(5))
        with pytest.raises(ValueError):
            covariance(brownian_kernel(4), 0.3, 0.5)

    def test_explicit_matches_factored(self, rng):
        k = brownian_kernel(6)
        e = KernelPath(k.grid, tensors=k.kernels)
        xi = rng.normal(size=(5, 6))
        np.testing.assert_allclose(e.evaluate(xi), k.evaluate(xi), atol=1e-13)
        np.testing.assert_allclose(e.gram(), k.gram(), atol=1e-13)

    def test_json_roundtrip(self):
        k = brownian_kernel(4)
        k2 = KernelPath.from_json(k.to_json())
        np.testing.assert_allclose(k2.gram(), k.gram())


class TestProduct:
    def test_passthrough(self):
        k = brownian_kernel(4)
        assert product_kernel([k]) is k

    def test_eval_identity(self, rng):
        k = brownian_product_kernel(2, 6)
        xi = rng.normal(size=(100, 12))
        g1, g2 = k.factors
        expect = (xi @ g1.T) * (xi @ g2.T)
        got = np.array([[ChaosVariable(k.tensor(i)).evaluate(x) for i in range(k.n_nodes)] for x in xi[:10]])
        np.testing.assert_allclose(got, expect[:10], atol=1e-10)
        explicit = KernelPath(k.grid, tensors=k.kernels)
        np.testing.assert_allclose(explicit.evaluate(xi), expect, atol=1e-10)

    def test_overlap_rejected(self):
        a = brownian_kernel(4, offset=0, dim=8)
        b = brownian_kernel(4, offset=2, dim=8)
        with pytest.raises(ValueError):
            product_kernel([a, b])

    def test_covariance_min_squared(self):
        k = brownian_product_kernel(2, 4)
        R = covariance_matrix(k)
        g = k.grid
        np.testing.assert_allclose(R, np.minimum.outer(g, g) ** 2, atol=1e-14)
        explicit = math.factorial(2) * inner(k.tensor(2), k.tensor(3))
        assert explicit == pytest.approx(R[2, 3])

    def test_covariance_monte_carlo(self):
        k = brownian_product_kernel(2, 4)
        xi = sample_gaussian(8, 400000, seed=2)
        X = k.evaluate(xi)
        prod = X[:, 2] * X[:, 4]
        se = prod.std() / np.sqrt(prod.size)
        assert abs(prod.mean() - covariance(k, 0.5, 1.0)) < 3 * se


class TestFbm:
    def test_covariance_exact_at_nodes(self):
        H = 0.3
        k = fbm_kernel(H, 8)
        g = k.grid
        s, t = np.meshgrid(g, g, indexing="ij")
        R = 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(s - t) ** (2 * H))
        np.testing.assert_allclose(covariance_matrix(k), R, atol=1e-12)
        assert "approximate" in k.label

    def test_hurst_half_is_brownian(self):
        np.testing.assert_allclose(covariance_matrix(fbm_kernel(0.5, 6)), covariance_matrix(brownian_kernel(6)), atol=1e-12)


class TestRectIncrement:
    def test_full_contraction_is_covariance_increment(self, rng):
        for k in (brownian_kernel(6), brownian_product_kernel(2, 4), fbm_kernel(0.4, 5)):
            R = covariance_matrix(k)
            g = k.grid
            for _ in range(10):
                s, t = sorted(rng.choice(k.n_nodes, 2, replace=False))
                u, v = sorted(rng.choice(k.n_nodes, 2, replace=False))
                res = rect_increment(k, (g[s], g[t], g[u], g[v]), k.order)
                rect = R[t, v] - R[t, u] - R[s, v] + R[s, u]
                assert math.factorial(k.order) * abs(res.value()) == pytest.approx(abs(rect), abs=1e-12)

    def test_disjoint_brownian(self):
        k = brownian_kernel(4)
        assert rect_increment(k, (0, 0.25, 0.5, 1.0), 1).is_zero()

    def test_range(self):
        with pytest.raises(ValueError):
            rect_increment(brownian_kernel(4), (0, 0.25, 0.5, 1.0), 2)

    def test_example_control_bound(self):
        k = brownian_product_kernel(2, 4)
        rho = 1.0
        omega = example_control(k, rho)
        g = k.grid
        for a, b, c, d in itertools.product(range(5), repeat=4):
            if a >= b or c >= d:
                continue
            res = rect_increment(k, (g[a], g[b], g[c], g[d]), 1)
            assert res.norm() <= omega(a, b, c, d) ** (1 / rho) + 1e-12


class TestVariation2D:
    def test_brownian_unit_square(self):
        k = brownian_kernel(8)
        D = rect_increments(covariance_matrix(k))
        assert variation_2d(D, 1.0) == pytest.approx(1.0)
        assert brute_variation_2d(D, 1.0) == pytest.approx(1.0)

    def test_constant(self):
        assert variation_2d(rect_increments(np.full((6, 6), 3.0)), 1.5) == 0.0

    def test_exhaustive_matches_brute(self, rng):
        for _ in range(15):
            n = int(rng.integers(1, 6))
            D = rng.normal(size=(n, n))
            rho = float(rng.uniform(1.0, 3.0))
            assert variation_2d(D, rho) == pytest.approx(brute_variation_2d(D, rho), rel=1e-12)

    def test_monotone_in_rho(self, rng):
        D = rng.normal(size=(5, 5))
        vals = [variation_2d(D, r) for r in (1.0, 1.5, 2.0, 4.0, 16.0)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
        best_single = max(
            abs(D[a:b, c:d].sum()) for a in range(5) for b in range(a + 1, 6) for c in range(5) for d in range(c + 1, 6)
        )
        assert vals[-1] >= best_single - 1e-12
        assert variation_2d(D, 200.0) == pytest.approx(best_single, rel=0.05)

    def test_refinement_monotone(self):
        for H in (0.3, 0.45):
            fine = fbm_kernel(H, 8)
            coarse = fine.restrict(np.arange(0, 9, 2))
            v_c = variation_2d(rect_increments(covariance_matrix(coarse)), 1.4)
            v_f = variation_2d(rect_increments(covariance_matrix(fine)), 1.4)
            assert v_f >= v_c - 1e-12

    def test_large_grid_lower_bound(self):
        k = fbm_kernel(0.4, 16)
        D = rect_increments(covariance_matrix(k))
        val, exact = variation_2d(D, 1.3, return_exact=True)
        assert not exact
        coarse = rect_increments(covariance_matrix(k.restrict(np.arange(0, 17, 2))))
        assert val >= variation_2d(coarse, 1.3) - 1e-12

    def test_region_errors(self):
        with pytest.raises(ValueError):
            variation_2d(np.zeros((3, 3)), 1.0, region=(0, 4, 0, 3))
        with pytest.raises(ValueError):
            variation_2d(np.zeros((3, 3)), 0.5)
        assert variation_2d(np.ones((3, 3)), 1.0, region=(1, 1, 0, 3)) == 0.0

    def test_control_type(self):
        g = uniform_grid(3)
        c = Control2D(g, np.eye(3), 1.0)
        assert variation_2d(c, 1.0) == 3.0
        with pytest.raises(ValueError):
            Control2D(g, -np.eye(3), 1.0)


def test_hilbert_variation_brownian():
    k = brownian_kernel(4)
    V = hilbert_variation(k.factors[0], 1.0)
    # ||1_[s,t]|| = sqrt(t - s); the finest partition is optimal for rho = 1
    assert V[0, 4] == pytest.approx(4 * np.sqrt(0.25))
    V2 = hilbert_variation(k.factors[0], 2.0)
    assert V2[0, 4] == pytest.approx(1.0)


class TestCheckAssumptions:
    def test_brownian_equality(self):
        rep = check_assumptions(brownian_kernel(8), 1.0)
        assert rep.assumption1_pass
        assert rep.assumption1_max_ratio == pytest.approx(1.0)
        assert rep.assumption2_pass is None

    def test_product_with_example_control(self):
        rep = check_assumptions(brownian_product_kernel(2, 4), 1.0)
        assert rep.assumption2_pass
        assert set(rep.assumption2_max_ratio) == {1, 2}
        assert rep.status == "grid-certified"

    def test_rough_kernel_fails(self):
        rep = check_assumptions(fbm_kernel(0.25, 8), 1.0)
        assert not rep.assumption1_pass
        assert rep.violations and rep.violations[0]["clause"] == 1


def test_deterministic_kernel(rng):
    g = uniform_grid(4)
    k = deterministic_kernel(g ** 2, g, dim=3)
    vals = k.evaluate(rng.normal(size=(7, 3)))
    assert vals.shape == (7, 5)
    np.testing.assert_allclose(vals, np.broadcast_to(g ** 2, (7, 5)))
