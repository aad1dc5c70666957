import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from chaosrough.analysis import (
    accumulated_variation,
    greedy,
    greedy_count,
    kernel_pairing,
    rate_function,
    scaling_check,
    tail_scan,
)
from chaosrough.kernels import KernelPath, brownian_kernel, brownian_product_kernel, uniform_grid
from chaosrough.roughlift import Level2Path, lift_piecewise_linear, p_variation
from chaosrough.symtensor import SymTensor, power


def window_norm(y, i, j, p, level2=True):
    r = p_variation(y.restrict_segment(i, j), p)
    return r.level1 ** p + (r.level2 ** (p / 2) if level2 else 0.0)


def brute_accumulated(x, alpha, p):
    """Enumerate all grid partitions and keep those with every piece <= alpha."""
    K = x.n_nodes
    best = -1.0
    for mask in range(2 ** (K - 2)):
        pts = [0] + [c + 1 for c in range(K - 2) if mask >> c & 1] + [K - 1]
        pieces = [window_norm(x, a, b, p) for a, b in zip(pts, pts[1:])]
        if max(pieces) <= alpha * (1 + 1e-9):
            best = max(best, sum(pieces))
    return best


class TestGreedy:
    def test_small_norm_gives_zero(self, rng):
        x = lift_piecewise_linear(rng.normal(size=(10, 2)) * 0.01)
        st_ = greedy(x, 1.0, 2.5)
        assert st_.N == 0
        assert list(st_.taus) == [1.0]

    @pytest.mark.parametrize("cells", [3, 4, 7, 8])
    def test_linear_path_level1(self, cells):
        t = uniform_grid(cells)
        st_ = greedy(lift_piecewise_linear(t, t), 0.25, 1.0, level2=False)
        np.testing.assert_allclose(st_.taus, [0.25, 0.5, 0.75, 1.0], atol=1e-12)
        assert st_.N == 3
        assert st_.alpha * st_.N == pytest.approx(0.75)
        assert st_.homogeneous_norm_p == pytest.approx(1.0)

    def test_windows_exhaust_alpha(self, rng):
        x = lift_piecewise_linear(rng.normal(size=(33, 2)).cumsum(axis=0) * 0.2)
        st_ = greedy(x, 0.1, 2.5)
        assert st_.N >= 3
        y = x.refine(st_.taus)
        idx = np.concatenate([[0], np.searchsorted(y.grid, st_.taus)])
        vals = [window_norm(y, a, b, 2.5) for a, b in zip(idx[:-1], idx[1:])]
        np.testing.assert_allclose(vals[:-1], 0.1, rtol=1e-8)
        assert vals[-1] <= 0.1 * (1 + 1e-9)
        np.testing.assert_allclose(vals, st_.window_values, rtol=1e-10)

    def test_explicit_level2(self, rng):
        d = rng.normal(size=(16, 2)) * 0.3
        X = np.vstack([np.zeros(2), d.cumsum(axis=0)])
        area = rng.normal(size=16) * 0.05
        l2 = 0.5 * d[:, :, None] * d[:, None, :] + area[:, None, None] * np.array([[0, 1], [-1, 0]])
        x = Level2Path(np.linspace(0, 1, 17), X, l2)
        st_ = greedy(x, 0.05, 2.5)
        assert all(st_.check().values())
        assert st_.M_accumulated >= st_.M_greedy - 1e-12

    def test_accumulated_matches_enumeration(self, rng):
        for _ in range(5):
            x = lift_piecewise_linear(rng.normal(size=(9, 2)).cumsum(axis=0) * 0.3)
            alpha = 0.3
            assert accumulated_variation(x, alpha, 2.5) == pytest.approx(brute_accumulated(x, alpha, 2.5), rel=1e-12)

    def test_bad_args(self):
        x = lift_piecewise_linear(np.arange(4.0))
        with pytest.raises(ValueError):
            greedy(x, 0.0, 2.5)
        with pytest.raises(ValueError):
            greedy(x, 0.1, 0.5)

    def test_count_matches_full(self, rng):
        x = lift_piecewise_linear(rng.normal(size=(20, 3)).cumsum(axis=0))
        N, taus = greedy_count(x, 0.5, 2.5)
        st_ = greedy(x, 0.5, 2.5)
        assert N == st_.N
        np.testing.assert_array_equal(taus, st_.taus)

    @settings(max_examples=40, deadline=None)
    @given(
        arrays(np.float64, (14, 2), elements=st.floats(-1, 1)),
        st.floats(0.05, 2.0),
        st.sampled_from([1.0, 2.0, 2.5, 3.5]),
    )
    def test_invariants_property(self, steps, alpha, p):
        x = lift_piecewise_linear(np.cumsum(steps, axis=0))
        st_ = greedy(x, alpha, p)
        chk = st_.check()
        assert chk["count_bound"] and chk["accumulated_bound"]
        assert st_.M_accumulated >= st_.M_greedy - 1e-9 * max(1.0, st_.M_greedy)
        assert np.all(np.diff(st_.taus) > 0)

    def test_invariants_brownian_samples(self):
        k = brownian_product_kernel(2, 16)
        xi = np.random.default_rng(0).normal(size=(50, 2, k.dim))
        paths = np.moveaxis(k.evaluate(xi), 1, 2)
        for P in paths:
            st_ = greedy(lift_piecewise_linear(P, k.grid), 0.1, 2.5)
            assert all(st_.check().values())


class TestTailScan:
    def test_monotone_and_wilson(self):
        r = tail_scan(brownian_kernel(16), 0.2, 2.5, range(0, 15), samples=400, seed=3)
        assert r["monotone"]
        s = np.array(r["survival"])
        assert np.all(np.array(r["wilson_low"]) <= s + 1e-15)
        assert np.all(s <= np.array(r["wilson_high"]) + 1e-15)
        assert r["exponent"] == pytest.approx(0.8)

    def test_deterministic(self):
        a = tail_scan(brownian_kernel(8), 0.2, 2.5, [1, 2, 3], samples=200, seed=5)
        b = tail_scan(brownian_kernel(8), 0.2, 2.5, [1, 2, 3], samples=200, seed=5)
        assert a["survival"] == b["survival"]

    def test_degenerate(self):
        r = tail_scan(brownian_kernel(8), 0.2, 2.5, [1000, 2000], samples=100, seed=5)
        assert r["degenerate"]
        assert r["survival"] == [0.0, 0.0]

    @pytest.mark.slow
    def test_negative_slope(self):
        r = tail_scan(brownian_kernel(32), 0.1, 2.5, samples=4000, seed=1)
        assert not r["degenerate"] and r["slope"] < 0


class TestRateFunction:
    def test_brownian_linear_target(self):
        k = brownian_kernel(16)
        r = rate_function(k, k.grid, starts=4)
        assert r.status == "feasible"
        assert r.value == pytest.approx(0.5, abs=1e-10)
        # h == 1 on [0, 1] has coordinates sqrt(cell length)
        np.testing.assert_allclose(r.h_star[0], np.sqrt(np.diff(k.grid)), atol=1e-10)

    def test_multistart_agree_linear(self):
        k = brownian_kernel(8)
        x = np.sin(3 * k.grid)
        r = rate_function(k, x, starts=8)
        assert max(r.values[0]) - min(r.values[0]) <= 1e-6

    def test_zero_target(self):
        r = rate_function(brownian_kernel(8), np.zeros(9), starts=2)
        assert r.value == pytest.approx(0.0, abs=1e-20)
        assert np.all(r.h_star == 0)

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_square_kernel(self, c):
        g = uniform_grid(4)
        k = KernelPath(g, tensors=[SymTensor.monomial((0, 0), 3) * t for t in g])
        r = rate_function(k, c * g, starts=8)
        assert r.feasible
        assert r.value == pytest.approx(c / 2, abs=1e-8)
        assert abs(r.h_star[0, 0]) == pytest.approx(np.sqrt(c), abs=1e-8)
        np.testing.assert_allclose(r.h_star[0, 1:], 0, atol=1e-8)

    def test_square_kernel_negative(self):
        g = uniform_grid(4)
        k = KernelPath(g, tensors=[SymTensor.monomial((0, 0), 3) * t for t in g])
        r = rate_function(k, -0.5 * g, starts=8)
        assert r.status == "infeasible"
        assert r.residual >= 0.5 - 1e-6

    def test_certificate_product_kernel(self, rng):
        k = brownian_product_kernel(2, 4)
        h0 = rng.normal(size=k.dim)
        x = kernel_pairing(k, h0)
        r = rate_function(k, x, starts=16)
        assert r.feasible
        assert np.max(np.abs(kernel_pairing(k, r.h_star[0]) - x)) <= 1e-6
        assert r.value == pytest.approx(0.5 * np.sum(r.h_star ** 2), abs=1e-12)
        assert r.value <= 0.5 * h0 @ h0 + 1e-8

    def test_pairing_explicit_matches_factored(self, rng):
        k = brownian_product_kernel(2, 3)
        ke = KernelPath(k.grid, tensors=k.kernels)
        h = rng.normal(size=k.dim)
        np.testing.assert_allclose(kernel_pairing(k, h), kernel_pairing(ke, h), atol=1e-12)

    def test_nonzero_start_infeasible(self):
        k = brownian_kernel(4)
        x = np.ones(5)
        assert rate_function(k, x, starts=2).status == "infeasible"

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            rate_function(brownian_kernel(4), np.zeros(3))


class TestScaling:
    def test_identity(self):
        r = scaling_check(brownian_kernel(8), [1.0], samples=3)
        row = r["rows"][0]
        assert row["level1_err"] == 0 and row["norm_err"] == 0
        assert row["composition_ratio"] == pytest.approx(1.0)

    def test_product_kernel(self):
        r = scaling_check(brownian_product_kernel(2, 8), [1.0, 0.5, 0.25], samples=5)
        assert r["max_err"] <= 1e-12
        assert r["rows"][1]["scale"] ** 2 == pytest.approx(1 / 16)
        assert r["N_monotone"]
        # disjoint factors carry no Hermite correction
        assert r["rows"][1]["composition_ratio"] == pytest.approx(0.25, rel=1e-12)

    def test_second_chaos_square(self):
        b = brownian_kernel(8)
        k = KernelPath(b.grid, tensors=[power(t, 2) for t in b.kernels])
        r = scaling_check(k, [1.0, 0.5], samples=5)
        assert r["max_err"] <= 1e-12
        # H_2(eps x) != eps^2 H_2(x): the composition is not the dilation
        assert abs(r["rows"][1]["composition_ratio"] - 0.25) > 1e-3

    def test_gaussian_composition_is_dilation(self):
        r = scaling_check(brownian_kernel(8), [0.5], samples=3)
        assert r["rows"][0]["composition_ratio"] == pytest.approx(0.5, rel=1e-12)

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            scaling_check(brownian_kernel(4), [0.0])
