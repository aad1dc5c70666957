"""The enhanced process ``(X, DX, ..., D^n X)`` and its translations.

Component ``j`` of a ``d``-dimensional chaos process is an independent copy of
``I_n(f_t)`` living on its own block of the Cameron-Martin space, so a sample
is given by coordinates ``xi`` of shape ``(d, M)`` and every Malliavin
derivative of component ``j`` is supported on block ``j``.  Derivatives are
stored densely: layer ``k`` has shape ``(N+1, d, M**k)`` holding the flattened
order-``k`` tensors ``D^k X^j_t`` in the orthonormal basis
``e_{i_1} (x) ... (x) e_{i_k}``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._rng import gaussian_block
from .chaos import GaussianSample, MalliavinDerivative
from .kernels import KernelPath
from .roughlift import Level2Path, p_variation
from .symtensor import SymTensor

__all__ = [
    "EnhancedSample",
    "enhance",
    "lift_enhanced",
    "block_integral",
    "block_norm",
    "block_norms_csv",
    "translate",
    "translation_growth",
    "draw_xi",
]

MAX_LAYER_ENTRIES = 60_000_000
MAX_BLOCK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class EnhancedSample:
    """Realisation of ``D^k X^j_t`` for ``k = 0..K`` on the kernel grid.

    Attributes
    ----------
    grid : ndarray of shape ``(N+1,)``
    layers : tuple of ndarray
        ``layers[k]`` has shape ``(N+1, d, M**k)``; ``layers[0][..., 0]`` is X.
    xi : ndarray of shape ``(d, M)``
        The coordinates of ``omega``.
    order : int
        Chaos order ``n`` of the underlying process.
    kernel : KernelPath
    """

    grid: np.ndarray
    layers: tuple
    xi: np.ndarray
    order: int
    kernel: KernelPath

    @property
    def d(self) -> int:
        return self.xi.shape[0]

    @property
    def M(self) -> int:
        return self.xi.shape[1]

    @property
    def max_order(self) -> int:
        return len(self.layers) - 1

    @property
    def values(self) -> np.ndarray:
        """``X_t`` with shape ``(N+1, d)``."""
        return self.layers[0][:, :, 0]

    def derivative(self, k: int) -> np.ndarray:
        """``D^k X`` as shape ``(N+1, d) + (M,)*k``."""
        if k > self.max_order:
            raise ValueError(f"derivative order {k} was not computed (max {self.max_order})")
        L = self.layers[k]
        return L.reshape(L.shape[:2] + (self.M,) * k)

    def pair(self, k: int, h) -> np.ndarray:
        """``<D^k X^j_t, (h^j)^{(x) k}>`` for all nodes and components, shape ``(N+1, d)``."""
        h = _as_direction(h, self.d, self.M)
        out = self.layers[k]
        for _ in range(k):
            out = np.einsum("tjam,jm->tja", out.reshape(out.shape[0], self.d, -1, self.M), h)
        return out.reshape(out.shape[0], self.d)

    def flat(self) -> np.ndarray:
        """Concatenated coordinates of all layers, shape ``(N+1, d * sum_k M^k)``."""
        return np.concatenate([L.reshape(L.shape[0], -1) for L in self.layers], axis=1)


def draw_xi(d: int, M: int, seed: int, index: int = 0) -> np.ndarray:
    """Coordinates ``(d, M)`` of sample ``index`` in the stream ``seed``."""
    return gaussian_block(seed, index, 1, d * M).reshape(d, M)


def _as_xi(omega, M: int) -> np.ndarray:
    xi = omega.xi if isinstance(omega, GaussianSample) else np.asarray(omega, dtype=float)
    if xi.ndim == 1:
        if xi.size % M:
            raise ValueError(f"sample of size {xi.size} is not a multiple of the kernel dim {M}")
        xi = xi.reshape(-1, M)
    if xi.ndim != 2 or xi.shape[1] != M:
        raise ValueError(f"sample shape {xi.shape} does not match kernel dim {M}")
    return xi


def _as_direction(h, d: int, M: int) -> np.ndarray:
    if isinstance(h, SymTensor):
        h = [h]
    if isinstance(h, (list, tuple)) and h and isinstance(h[0], SymTensor):
        h = np.array([t.to_vector() for t in h])
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[None, :]
    if h.shape != (d, M):
        raise ValueError(f"direction shape {h.shape} does not match ({d}, {M})")
    return h


def _factored_layers(k: KernelPath, xi: np.ndarray, K: int) -> list[np.ndarray]:
    """Leibniz rule for ``prod_i <xi, g^i_t>`` with disjoint factors."""
    n, T, M = k.order, k.n_nodes, k.dim
    d = xi.shape[0]
    Y = np.stack([xi @ g.T for g in k.factors], axis=-1)  # (d, T, n)
    layers = []
    for kk in range(K + 1):
        L = np.zeros((T, d, M ** kk))
        for tup in itertools.permutations(range(n), kk):
            rest = [i for i in range(n) if i not in tup]
            coef = np.prod(Y[:, :, rest], axis=-1).T if rest else np.ones((T, d))
            outer = np.ones((T, 1))
            for i in tup:
                outer = (outer[:, :, None] * k.factors[i][:, None, :]).reshape(T, -1)
            L += coef[:, :, None] * outer[:, None, :]
        layers.append(L)
    return layers


def _explicit_layers(k: KernelPath, xi: np.ndarray, K: int) -> list[np.ndarray]:
    T, M, d = k.n_nodes, k.dim, xi.shape[0]
    layers = [np.zeros((T, d, M ** kk)) for kk in range(K + 1)]
    layers[0][:, :, 0] = k.evaluate(xi).T
    for t in range(T):
        f = k.tensor(t)
        for kk in range(1, K + 1):
            if kk > k.order:
                continue
            vals = MalliavinDerivative(f, kk).evaluate(xi)  # (d, M, ..., M)
            layers[kk][t] = vals.reshape(d, -1)
    return layers


def enhance(k: KernelPath, omega, max_order: int | None = None) -> EnhancedSample:
    """Evaluate ``X`` and its Malliavin derivatives at one sample.

    Parameters
    ----------
    k : KernelPath
        Kernel of order ``n``.
    omega : GaussianSample or array_like
        Coordinates of shape ``(d, M)`` (or flat ``(d*M,)``).
    max_order : int, optional
        Highest derivative to compute (default ``n``).
    """
    xi = _as_xi(omega, k.dim)
    n = k.order
    K = n if max_order is None else min(int(max_order), n)
    total = k.n_nodes * xi.shape[0] * sum(k.dim ** j for j in range(K + 1))
    if total > MAX_LAYER_ENTRIES:
        raise MemoryError(f"enhanced sample would hold {total} entries; lower max_order or the grid size")
    if k.is_factored:
        layers = _factored_layers(k, xi, K)
    else:
        layers = _explicit_layers(k, xi, K)
    for L in layers:
        L.setflags(write=False)
    return EnhancedSample(grid=k.grid, layers=tuple(layers), xi=xi, order=n, kernel=k)


def lift_enhanced(s: EnhancedSample) -> Level2Path:
    """Piecewise-linear level-2 lift of the flattened enhanced path.

    Every block ``int D^m X^{j1}_{s,r} (x) dD^k X^{j2}_r`` of the lift is an
    iterated integral of the interpolated path; use :func:`block_integral` or
    :func:`block_norm` to access individual blocks without materialising the
    full level-2 tensor.
    """
    return Level2Path(s.grid, s.flat())


def _block_paths(s: EnhancedSample, m: int, k: int, j1: int, j2: int, i: int, j: int):
    if not 0 <= i < j < s.grid.size:
        raise ValueError(f"need 0 <= i < j < {s.grid.size}")
    A = s.layers[m][i:j + 1, j1]
    B = s.layers[k][i:j + 1, j2]
    dA, dB = np.diff(A, axis=0), np.diff(B, axis=0)
    U = (A[:-1] - A[0]) + 0.5 * dA
    return U, dB


def block_integral(s: EnhancedSample, m: int, k: int, j1: int, j2: int, i: int, j: int) -> np.ndarray:
    """``int_{t_i}^{t_j} D^m X^{j1}_{t_i, r} (x) dD^k X^{j2}_r`` as an ``(M^m, M^k)`` array.

    Each linear segment contributes ``(A_{t_a} - A_{t_i}) (x) Delta B + 1/2 Delta A (x) Delta B``.
    """
    size = s.M ** m * s.M ** k
    if size > MAX_BLOCK_ENTRIES:
        raise MemoryError(f"block ({m}, {k}) has {size} entries; use block_norm instead")
    U, dB = _block_paths(s, m, k, j1, j2, i, j)
    return U.T @ dB


def block_norm(s: EnhancedSample, m: int, k: int, j1: int, j2: int, i: int, j: int) -> float:
    """Hilbert-Schmidt norm of a block via the double sum of segment inner products.

    ``|| sum_a U_a (x) V_a ||^2 = sum_{a,b} <U_a, U_b> <V_a, V_b>``.
    """
    U, dB = _block_paths(s, m, k, j1, j2, i, j)
    val = float(np.sum((U @ U.T) * (dB @ dB.T)))
    return math.sqrt(max(val, 0.0))


def block_norms_csv(s: EnhancedSample, path, intervals=None) -> None:
    """Write ``m, k, j1, j2, t_i, t_j, norm`` for every block and interval."""
    N = s.grid.size - 1
    intervals = [(0, N)] if intervals is None else intervals
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "k", "j1", "j2", "t_start", "t_end", "norm"])
        for m, k in itertools.product(range(s.max_order + 1), repeat=2):
            for j1, j2 in itertools.product(range(s.d), repeat=2):
                for i, j in intervals:
                    w.writerow([m, k, j1, j2, s.grid[i], s.grid[j], repr(block_norm(s, m, k, j1, j2, i, j))])


def translate(s: EnhancedSample, h, r: float) -> EnhancedSample:
    """Sample at ``omega + r h`` via the finite Malliavin-Stroock expansion.

    ``D^k X(omega + r h) = sum_{m >= k} r^{m-k}/(m-k)! <D^m X(omega), h^{(x)(m-k)}>``.
    The expansion is exact because every layer is a polynomial in ``xi``.
    When the sample holds fewer than ``n`` derivative layers the expansion is
    incomplete, and the kernel is re-evaluated at the shifted coordinates
    instead.
    """
    h = _as_direction(h, s.d, s.M)
    xi = s.xi + r * h
    if s.max_order < s.order:
        return enhance(s.kernel, xi, max_order=s.max_order)
    T, d, M = s.grid.size, s.d, s.M
    new = []
    for k in range(s.max_order + 1):
        acc = s.layers[k].copy()
        for m in range(k + 1, s.order + 1):
            c = s.layers[m]
            for _ in range(m - k):
                c = np.einsum("tjam,jm->tja", c.reshape(T, d, -1, M), h)
            acc += r ** (m - k) / math.factorial(m - k) * c.reshape(T, d, -1)
        acc.setflags(write=False)
        new.append(acc)
    return EnhancedSample(grid=s.grid, layers=tuple(new), xi=xi, order=s.order, kernel=s.kernel)


def translation_growth(k: KernelPath, h, r_list, p: float = 2.5, samples: int = 200, seed: int = 0, d: int = 1) -> dict:
    """Growth of ``||T_{rh} X^||^p / ||X^||^p`` in ``r`` for the enhanced lift.

    Returns per-``r`` mean ratios and the slope of ``log(mean ratio)`` against
    ``log r`` (least squares over ``r > 1``).  Samples with zero norm are
    excluded and counted.
    """
    r_list = sorted(float(r) for r in r_list)
    h = _as_direction(h, d, k.dim)
    ratios = [[] for _ in r_list]
    degenerate = 0
    for idx in range(samples):
        s = enhance(k, draw_xi(d, k.dim, seed, idx))
        base = p_variation(lift_enhanced(s), p).norm_p
        if base <= 0 or not np.isfinite(base):
            degenerate += 1
            continue
        for a, r in enumerate(r_list):
            ratios[a].append(p_variation(lift_enhanced(translate(s, h, r)), p).norm_p / base)
    mean = np.array([np.mean(x) for x in ratios])
    se = np.array([np.std(x, ddof=1) / math.sqrt(len(x)) if len(x) > 1 else np.nan for x in ratios])
    big = np.array(r_list) > 1
    slope = float(np.polyfit(np.log(np.array(r_list)[big]), np.log(mean[big]), 1)[0]) if big.sum() >= 2 else float("nan")
    return {
        "r": r_list,
        "mean_ratio": mean.tolist(),
        "se": se.tolist(),
        "slope": slope,
        "exponent": k.order * p + p / 2,
        "p": p,
        "samples": samples,
        "degenerate": degenerate,
    }
