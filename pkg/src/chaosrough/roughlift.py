"""Level-2 rough path lifts on time grids.

A :class:`Level2Path` stores node values ``X_{t_k}`` together with the
second-level iterated integrals of each grid segment.  All other increments are
obtained from Chen's relation.  When the segment integrals are omitted the path
is the piecewise-linear interpolation and each segment carries
``1/2 Delta X (x) Delta X``.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._rng import gaussian_block
from ._variation import max_partition_sum, path_variation
from .kernels import KernelPath, covariance_matrix, rect_increments, variation_2d
from .symtensor import SymTensor, inner, multiplicity_factorial

__all__ = [
    "Level2Path",
    "PVarResult",
    "lift_piecewise_linear",
    "chen_compose",
    "p_variation",
    "rough_distance",
    "holder_norm",
    "dyadic_convergence",
    "normalized_monomial_basis",
    "kl_partial_sum",
    "kl_second_moments",
    "embedding_norm",
    "sample_kernel_paths",
]

CHEN_TOL = 1e-12


class Level2Path:
    """Grid path with level-1 values and per-segment level-2 integrals.

    Parameters
    ----------
    grid : array_like of shape ``(K,)``
    level1 : array_like of shape ``(K, D)``
        Node values.
    level2 : array_like of shape ``(K-1, D, D)``, optional
        Iterated integrals over each segment ``[t_k, t_{k+1}]``.  ``None``
        means linear interpolation between nodes.
    p_hint : float, optional
        Intended variation exponent (metadata only).
    """

    def __init__(self, grid, level1, level2=None, p_hint: float | None = None):
        grid = np.asarray(grid, dtype=float)
        X = np.asarray(level1, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("need at least two grid points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if X.shape[0] != grid.size:
            raise ValueError(f"level1 has {X.shape[0]} rows for {grid.size} grid points")
        if level2 is not None:
            level2 = np.asarray(level2, dtype=float)
            if level2.shape != (grid.size - 1, X.shape[1], X.shape[1]):
                raise ValueError(f"level2 must have shape {(grid.size - 1, X.shape[1], X.shape[1])}")
            level2.setflags(write=False)
        grid.setflags(write=False)
        X.setflags(write=False)
        self.grid, self.level1, self._level2, self.p_hint = grid, X, level2, p_hint

    # ---------------------------------------------------------- structure
    @property
    def dim(self) -> int:
        return self.level1.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.grid.size

    @property
    def is_linear(self) -> bool:
        return self._level2 is None

    def segment_increments(self) -> np.ndarray:
        return np.diff(self.level1, axis=0)

    def segment_level2(self) -> np.ndarray:
        """Level-2 integrals of each grid segment, shape ``(K-1, D, D)``."""
        if self._level2 is not None:
            return self._level2
        d = self.segment_increments()
        return 0.5 * d[:, :, None] * d[:, None, :]

    def cumulative_level2(self) -> np.ndarray:
        """``XX_{t_0, t_k}`` for every node ``k``, built by Chen's relation."""
        d = self.segment_increments()
        seg = self.segment_level2()
        X0 = self.level1 - self.level1[0]
        cross = X0[:-1, :, None] * d[:, None, :]
        out = np.zeros((self.n_nodes, self.dim, self.dim))
        np.cumsum(seg + cross, axis=0, out=out[1:])
        return out

    def increment(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        """``(X_{t_i, t_j}, XX_{t_i, t_j})`` for ``i <= j``."""
        if not 0 <= i <= j < self.n_nodes:
            raise ValueError(f"need 0 <= i <= j < {self.n_nodes}, got ({i}, {j})")
        d = self.segment_increments()[i:j]
        seg = self.segment_level2()[i:j]
        Xr = np.cumsum(d, axis=0) - d
        area = np.sum(seg, axis=0) + np.einsum("ka,kb->ab", Xr, d)
        return self.level1[j] - self.level1[i], area

    def level2_row(self, i: int, cum=None) -> np.ndarray:
        """``XX_{t_i, t_j}`` for all ``j`` (entries ``j < i`` are meaningless)."""
        A = self.cumulative_level2() if cum is None else cum
        X0i = self.level1[i] - self.level1[0]
        inc = self.level1 - self.level1[i]
        return A - A[i] - X0i[None, :, None] * inc[:, None, :]

    def all_increments(self) -> tuple[np.ndarray, np.ndarray]:
        """Level-1 ``(K, K, D)`` and level-2 ``(K, K, D, D)`` increments over all pairs."""
        A = self.cumulative_level2()
        inc1 = self.level1[None, :, :] - self.level1[:, None, :]
        X0 = self.level1 - self.level1[0]
        inc2 = A[None, :, :, :] - A[:, None, :, :] - X0[:, None, :, None] * inc1[:, :, None, :]
        return inc1, inc2

    # --------------------------------------------------------- transforms
    def dilate(self, delta: float) -> "Level2Path":
        """``(delta X, delta^2 XX)``."""
        l2 = None if self._level2 is None else delta ** 2 * self._level2
        return Level2Path(self.grid, delta * self.level1, l2, self.p_hint)

    def restrict_segment(self, i: int, j: int) -> "Level2Path":
        """Sub-path on nodes ``i..j``."""
        l2 = None if self._level2 is None else self._level2[i:j]
        return Level2Path(self.grid[i:j + 1], self.level1[i:j + 1], l2, self.p_hint)

    def refine(self, times) -> "Level2Path":
        """Insert nodes at ``times``; segments are split consistently with Chen.

        Level-1 values are interpolated linearly inside a segment.  The part of
        the segment integral beyond ``1/2 Delta (x) Delta`` is shared in
        proportion to the sub-segment lengths, which keeps every composed
        increment unchanged.
        """
        times = np.unique(np.asarray(times, dtype=float))
        times = times[(times > self.grid[0]) & (times < self.grid[-1])]
        times = times[~np.isin(times, self.grid)]
        if times.size == 0:
            return self
        new_grid = np.union1d(self.grid, times)
        seg = np.searchsorted(self.grid, new_grid[:-1], side="right") - 1
        X = np.empty((new_grid.size, self.dim))
        for a in range(self.dim):
            X[:, a] = np.interp(new_grid, self.grid, self.level1[:, a])
        if self._level2 is None:
            return Level2Path(new_grid, X, None, self.p_hint)
        d_old = self.segment_increments()
        excess = self._level2 - 0.5 * d_old[:, :, None] * d_old[:, None, :]
        lam = np.diff(new_grid) / np.diff(self.grid)[seg]
        d_new = np.diff(X, axis=0)
        l2 = 0.5 * d_new[:, :, None] * d_new[:, None, :] + lam[:, None, None] * excess[seg]
        return Level2Path(new_grid, X, l2, self.p_hint)

    # ---------------------------------------------------------------- io
    def to_csv(self, path) -> None:
        """Write node, time, level-1 components and flattened ``XX_{0,t}``."""
        A = self.cumulative_level2()
        D = self.dim
        header = ["node", "t"] + [f"x{a}" for a in range(D)] + [f"xx{a}{b}" for a in range(D) for b in range(D)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.n_nodes):
                w.writerow([k, repr(float(self.grid[k]))] + [repr(float(v)) for v in self.level1[k]] + [repr(float(v)) for v in A[k].ravel()])

    def __repr__(self) -> str:
        kind = "linear" if self.is_linear else "explicit"
        return f"Level2Path(nodes={self.n_nodes}, dim={self.dim}, level2={kind})"


def lift_piecewise_linear(samples, grid=None, p_hint: float | None = None) -> Level2Path:
    """Canonical level-2 lift of the piecewise-linear interpolation of ``samples``.

    Parameters
    ----------
    samples : array_like of shape ``(K,)`` or ``(K, D)``
        Node values.
    grid : array_like, optional
        Node times; defaults to a uniform grid on ``[0, 1]``.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least two nodes")
    grid = np.linspace(0.0, 1.0, X.shape[0]) if grid is None else grid
    return Level2Path(grid, X, None, p_hint)


def chen_compose(a: Level2Path, b: Level2Path) -> Level2Path:
    """Concatenate a path on ``[s, u]`` with one on ``[u, t]``."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    if abs(a.grid[-1] - b.grid[0]) > CHEN_TOL:
        raise ValueError(f"time mismatch at junction: {a.grid[-1]} vs {b.grid[0]}")
    if np.max(np.abs(a.level1[-1] - b.level1[0])) > CHEN_TOL:
        raise ValueError("value mismatch at junction")
    grid = np.concatenate([a.grid, b.grid[1:]])
    X = np.concatenate([a.level1, b.level1[1:]])
    if a.is_linear and b.is_linear:
        return Level2Path(grid, X, None, a.p_hint)
    l2 = np.concatenate([a.segment_level2(), b.segment_level2()])
    return Level2Path(grid, X, l2, a.p_hint)


# ------------------------------------------------------------ p-variation
@dataclass(frozen=True)
class PVarResult:
    """Homogeneous p-variation and its two parts.

    ``level1`` is ``||X||_{p-var}`` and ``level2`` is ``||XX||_{p/2-var}``;
    ``norm = (level1^p + level2^{p/2})^{1/p}``.
    """

    norm: float
    level1: float
    level2: float
    p: float

    @property
    def norm_p(self) -> float:
        return self.norm ** self.p


def _pair_costs(inc1_row, inc2_row, p):
    c1 = np.linalg.norm(inc1_row.reshape(inc1_row.shape[0], -1), axis=1) ** p
    c2 = np.linalg.norm(inc2_row.reshape(inc2_row.shape[0], -1), axis=1) ** (p / 2.0)
    return c1, c2


def cost_matrices(x: Level2Path, p: float, y: Level2Path | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Piece costs ``|X_{ij}|^p`` and ``||XX_{ij}||^{p/2}`` (of ``x - y`` if given)."""
    K = x.n_nodes
    A = x.cumulative_level2()
    B = None if y is None else y.cumulative_level2()
    c1 = np.zeros((K, K))
    c2 = np.zeros((K, K))
    for i in range(K - 1):
        r1 = x.level1[i:] - x.level1[i]
        r2 = x.level2_row(i, A)[i:]
        if y is not None:
            r1 = r1 - (y.level1[i:] - y.level1[i])
            r2 = r2 - y.level2_row(i, B)[i:]
        c1[i, i:], c2[i, i:] = _pair_costs(r1, r2, p)
    return c1, c2


def p_variation(x: Level2Path, p: float) -> PVarResult:
    """Homogeneous p-variation over grid-subordinate partitions.

    Level 1 and level 2 are maximised separately by dynamic programming over
    the last split point.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    c1, c2 = cost_matrices(x, p)
    s1, s2 = max_partition_sum(c1), max_partition_sum(c2)
    return PVarResult(norm=(s1 + s2) ** (1.0 / p), level1=s1 ** (1.0 / p), level2=s2 ** (2.0 / p), p=p)


def rough_distance(x: Level2Path, y: Level2Path, p: float) -> PVarResult:
    """Inhomogeneous p-variation distance: homogeneous norm of ``(X - Y, XX - YY)``."""
    if x.n_nodes != y.n_nodes or np.max(np.abs(x.grid - y.grid)) > CHEN_TOL:
        raise ValueError("paths must share the grid")
    c1, c2 = cost_matrices(x, p, y)
    s1, s2 = max_partition_sum(c1), max_partition_sum(c2)
    return PVarResult(norm=(s1 + s2) ** (1.0 / p), level1=s1 ** (1.0 / p), level2=s2 ** (2.0 / p), p=p)


def holder_norm(x: Level2Path, alpha: float) -> tuple[float, float]:
    """Grid Hölder constants ``max |X_{s,t}|/|t-s|^alpha`` and level-2 analogue."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    A = x.cumulative_level2()
    h1 = h2 = 0.0
    for i in range(x.n_nodes - 1):
        dt = x.grid[i + 1:] - x.grid[i]
        r1 = np.linalg.norm(x.level1[i + 1:] - x.level1[i], axis=1)
        r2 = np.linalg.norm(x.level2_row(i, A)[i + 1:].reshape(dt.size, -1), axis=1)
        h1 = max(h1, float(np.max(r1 / dt ** alpha)))
        h2 = max(h2, float(np.max(r2 / dt ** (2 * alpha))))
    return h1, h2


# -------------------------------------------------------- lift convergence
def sample_kernel_paths(k: KernelPath, d: int, samples: int, seed: int, start: int = 0) -> np.ndarray:
    """Node values of ``d`` independent copies, shape ``(samples, K, d)``."""
    xi = gaussian_block(seed, start, samples, d * k.dim).reshape(samples, d, k.dim)
    return np.moveaxis(k.evaluate(xi), 1, 2)


def _interpolated_lift(grid, values, stride):
    coarse = values[::stride]
    fine = np.empty_like(values)
    for a in range(values.shape[1]):
        fine[:, a] = np.interp(grid, grid[::stride], coarse[:, a])
    return Level2Path(grid, fine)


def dyadic_convergence(k: KernelPath, levels, p: float = 2.5, samples: int = 200, seed: int = 0, d: int = 2, moment: float = 2.0, rho: float = 1.0) -> dict:
    """Monte Carlo Cauchy test of dyadic piecewise-linear lifts.

    The kernel must live on a uniform dyadic grid with ``2^L`` cells, where
    ``L = max(levels)`` serves as the proxy for the limit.  For every level
    ``l`` the lift of the path interpolated from the ``2^l`` coarse nodes is
    compared with the finest lift via :func:`rough_distance`.

    Returns
    -------
    dict
        ``levels``, ``mean`` and ``se`` of ``d_p^moment`` per level,
        ``diff_se`` of consecutive paired differences and ``decreasing``
        (each mean exceeds the next one by more than two paired standard
        errors).
    """
    levels = sorted(int(l) for l in levels)
    L = levels[-1]
    if k.n_nodes - 1 != 2 ** L:
        raise ValueError(f"kernel grid must have 2^{L} cells, has {k.n_nodes - 1}")
    if p <= 2 * rho:
        raise ValueError(f"need p > 2 rho, got p={p}, rho={rho}")
    if samples < 30:
        warnings.warn(f"only {samples} samples: low statistical power", RuntimeWarning, stacklevel=2)
    grid = k.grid
    vals = np.zeros((samples, len(levels)))
    for s in range(samples):
        X = sample_kernel_paths(k, d, 1, seed, start=s)[0]
        fine = Level2Path(grid, X)
        for j, l in enumerate(levels):
            if l == L:
                continue
            coarse = _interpolated_lift(grid, X, 2 ** (L - l))
            vals[s, j] = rough_distance(coarse, fine, p).norm ** moment
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(samples)
    diffs = vals[:, :-1] - vals[:, 1:]
    diff_se = diffs.std(axis=0, ddof=1) / math.sqrt(samples)
    decreasing = bool(np.all(diffs.mean(axis=0) > 2 * diff_se))
    return {
        "levels": levels,
        "mean": mean.tolist(),
        "se": se.tolist(),
        "diff_mean": diffs.mean(axis=0).tolist(),
        "diff_se": diff_se.tolist(),
        "decreasing": decreasing,
        "p": p,
        "moment": moment,
        "samples": samples,
    }


# --------------------------------------------------------- Karhunen-Loeve
def normalized_monomial_basis(order: int, dim: int, check: bool = True) -> list[SymTensor]:
    """Orthonormal basis ``sqrt(n!/alpha!) e_alpha`` of symmetric order-``n`` tensors."""
    nf = math.factorial(order)
    basis = [
        SymTensor.monomial(idx, dim, math.sqrt(nf / multiplicity_factorial(idx)))
        for idx in itertools.combinations_with_replacement(range(dim), order)
    ]
    if check:
        _check_orthonormal(basis)
    return basis


def _check_orthonormal(basis, tol: float = 1e-10):
    G = np.array([[inner(a, b) for b in basis] for a in basis]) if basis else np.zeros((0, 0))
    resid = float(np.max(np.abs(G - np.eye(len(basis))))) if basis else 0.0
    if resid > tol:
        raise ValueError(f"basis is not orthonormal: Gram residual {resid:.3e}")
    return resid


def kl_partial_sum(k: KernelPath, basis, K: int) -> KernelPath:
    """Kernel path of ``X^K_t = sum_{i<K} <f_t, phi_i> I_n(phi_i)``."""
    basis = list(basis)
    if not 0 <= K <= len(basis):
        raise ValueError(f"K={K} outside [0, {len(basis)}]")
    for b in basis:
        if b.order != k.order or b.dim != k.dim:
            raise ValueError("basis elements must match the kernel order and dim")
    _check_orthonormal(basis)
    out = []
    for i in range(k.n_nodes):
        f = k.tensor(i)
        acc = SymTensor.zeros(k.order, k.dim)
        for phi in basis[:K]:
            c = inner(f, phi)
            if c != 0.0:
                acc = acc + c * phi
        out.append(acc)
    return KernelPath(k.grid, tensors=out, label=f"kl[{K}]({k.label})")


def kl_second_moments(k: KernelPath) -> dict:
    """Exact second moments of the piecewise-linear lift of two independent copies.

    Returns ``level1[s, t] = E (X_{s,t})^2`` and
    ``level2_cross[s, t] = E (XX^{12}_{s,t})^2`` for all node pairs ``s < t``.
    """
    R = covariance_matrix(k)
    C = rect_increments(R)
    Kn = k.n_nodes
    diag = np.diag(R)
    level1 = diag[None, :] + diag[:, None] - 2 * R
    level2 = np.zeros((Kn, Kn))
    for a in range(Kn):
        for b in range(a + 1, Kn):
            Cs = C[a:b, a:b]
            m = b - a
            W = np.triu(np.ones((m, m)), 1) + 0.5 * np.eye(m)
            level2[a, b] = np.trace(W.T @ Cs @ W @ Cs)
    return {"level1": np.triu(level1, 1), "level2_cross": level2}


def embedding_norm(k: KernelPath, phi: SymTensor, rho: float = 1.0) -> dict:
    """Grid ``rho``-variation of ``t -> <f_t, phi>`` and the comparison bound.

    The bound is ``||phi|| * sqrt(||R||_{rho-var})`` with the 2D variation
    computed on the grid (a lower estimate on large grids, flagged by
    ``bound_exact``).
    """
    if phi.order != k.order or phi.dim != k.dim:
        raise ValueError("phi must match the kernel order and dim")
    vals = np.array([inner(k.tensor(i), phi) for i in range(k.n_nodes)])
    var = path_variation(vals, rho)
    rv, exact = variation_2d(rect_increments(covariance_matrix(k)), rho, return_exact=True)
    return {"variation": float(var), "bound": float(phi.norm() * math.sqrt(rv)), "bound_exact": bool(exact), "path": vals}
