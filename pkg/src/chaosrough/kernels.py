"""Kernel families ``t -> f_t`` defining chaos processes ``X_t = I_n(f_t)``.

The truncated Cameron-Martin space is spanned by step functions aligned to the
time grid, ``e_i = 1_{cell i} / sqrt(Delta_i)``, so Brownian-type kernels are
represented exactly at grid nodes.  Products of independent order-1 kernels are
kept in factored form and only expanded into a :class:`SymTensor` on request.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._variation import all_interval_partition_sums, pairwise_distances
from .chaos import ChaosVariable, hermite_table
from .symtensor import SymTensor, contract, inner, symmetrize_outer

__all__ = [
    "KernelPath",
    "Control2D",
    "AssumptionReport",
    "uniform_grid",
    "brownian_kernel",
    "fbm_kernel",
    "product_kernel",
    "deterministic_kernel",
    "covariance",
    "covariance_matrix",
    "rect_increment",
    "rect_increments",
    "variation_2d",
    "hilbert_variation",
    "example_control",
    "check_assumptions",
]

GRID_TOL = 1e-12


def uniform_grid(n_cells: int) -> np.ndarray:
    if n_cells < 1:
        raise ValueError(f"need at least one cell, got {n_cells}")
    return np.linspace(0.0, 1.0, n_cells + 1)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1D array with at least two points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return grid


class KernelPath:
    """A kernel family on a time grid.

    Two storage modes are supported:

    * ``factors``: a list of ``n`` arrays of shape ``(N+1, dim)``; node ``k``
      carries ``f = g^1 (x)^ ... (x)^ g^n`` with ``g^i`` the ``k``-th row of factor
      ``i``.  Factors must have disjoint supports so that
      ``I_n(f) = prod_i I_1(g^i)``.
    * ``tensors``: an explicit list of :class:`SymTensor` (one per node).

    Parameters
    ----------
    grid : array_like
        Strictly increasing time points.
    factors : list of ndarray, optional
    tensors : list of SymTensor, optional
    label : str
        Human-readable construction descriptor.
    """

    def __init__(self, grid, factors=None, tensors=None, label: str = "custom", dim: int | None = None):
        self.grid = _check_grid(grid)
        self.grid.setflags(write=False)
        self.label = label
        if (factors is None) == (tensors is None):
            raise ValueError("give exactly one of factors or tensors")
        npts = self.grid.size
        if factors is not None:
            factors = [np.array(g, dtype=float) for g in factors]
            if not factors:
                raise ValueError("factored kernels need at least one factor; use tensors for order 0")
            dim = factors[0].shape[1]
            for g in factors:
                if g.shape != (npts, dim):
                    raise ValueError(f"factor shape {g.shape} does not match ({npts}, {dim})")
                g.setflags(write=False)
            supports = [set(np.nonzero(np.any(g != 0, axis=0))[0]) for g in factors]
            for a, b in itertools.combinations(supports, 2):
                if a & b:
                    raise ValueError("factor supports overlap; factors must live on disjoint coordinate blocks")
            self.factors = factors
            self._tensors = None
            self.order = len(factors)
            self.dim = dim
        else:
            tensors = list(tensors)
            if len(tensors) != npts:
                raise ValueError(f"expected {npts} tensors, got {len(tensors)}")
            self.order = tensors[0].order
            self.dim = tensors[0].dim
            for t in tensors:
                if t.order != self.order or t.dim != self.dim:
                    raise ValueError("all kernels must share order and dim")
            self.factors = None
            self._tensors = tensors
        self._basis_cache = None

    # ------------------------------------------------------------ accessors
    @property
    def n_nodes(self) -> int:
        return self.grid.size

    @property
    def is_factored(self) -> bool:
        return self.factors is not None

    def node_index(self, t: float) -> int:
        """Index of grid time ``t``; off-grid times raise."""
        i = int(np.searchsorted(self.grid, t - GRID_TOL))
        if i >= self.grid.size or abs(self.grid[i] - t) > GRID_TOL:
            raise ValueError(f"time {t} is not a grid point")
        return i

    def tensor(self, i: int) -> SymTensor:
        """Kernel at node ``i`` as a :class:`SymTensor`."""
        if self._tensors is not None:
            return self._tensors[i]
        out = SymTensor.from_vector(self.factors[0][i])
        for g in self.factors[1:]:
            out = symmetrize_outer(out, SymTensor.from_vector(g[i]))
        return out

    @property
    def kernels(self) -> list[SymTensor]:
        if self._tensors is None:
            self._tensors = [self.tensor(i) for i in range(self.n_nodes)]
        return self._tensors

    def kernel_at(self, t: float) -> SymTensor:
        return self.tensor(self.node_index(t))

    def increment(self, i: int, j: int) -> SymTensor:
        """``f_{t_i, t_j} = f_{t_j} - f_{t_i}``."""
        return self.tensor(j) - self.tensor(i)

    def restrict(self, idx) -> "KernelPath":
        """Sub-path on the nodes ``idx`` (kernels unchanged, so exact)."""
        idx = np.asarray(idx, dtype=int)
        if self.is_factored:
            return KernelPath(self.grid[idx], factors=[g[idx] for g in self.factors], label=self.label)
        return KernelPath(self.grid[idx], tensors=[self._tensors[i] for i in idx], label=self.label)

    # ----------------------------------------------------------- evaluation
    def _monomial_basis(self):
        if self._basis_cache is None:
            keys = sorted({k for t in self.kernels for k in t.coeffs})
            pos = {k: i for i, k in enumerate(keys)}
            C = np.zeros((self.n_nodes, len(keys)))
            for a, t in enumerate(self.kernels):
                for k, c in t.coeffs.items():
                    C[a, pos[k]] = c
            self._basis_cache = (keys, C)
        return self._basis_cache

    def evaluate(self, xi) -> np.ndarray:
        """Values ``X_{t_k}`` for a batch of coordinate vectors.

        Parameters
        ----------
        xi : ndarray of shape ``(..., dim)``

        Returns
        -------
        ndarray of shape ``(..., N+1)``
        """
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.dim:
            raise ValueError(f"sample dimension {xi.shape[-1]} does not match kernel dim {self.dim}")
        if self.is_factored:
            out = xi @ self.factors[0].T
            for g in self.factors[1:]:
                out = out * (xi @ g.T)
            return out
        if self.order == 0:
            vals = np.array([t.value() for t in self._tensors])
            return np.broadcast_to(vals, xi.shape[:-1] + vals.shape).copy()
        keys, C = self._monomial_basis()
        lead = xi.shape[:-1]
        x2 = xi.reshape(-1, self.dim)
        table = hermite_table(self.order, x2)
        phi = np.ones((x2.shape[0], len(keys)))
        for b, key in enumerate(keys):
            for j in set(key):
                phi[:, b] *= table[key.count(j), :, j]
        return (phi @ C.T).reshape(lead + (self.n_nodes,))

    def chaos_variable(self, i: int) -> ChaosVariable:
        return ChaosVariable(self.tensor(i))

    # ---------------------------------------------------------- covariance
    def gram(self) -> np.ndarray:
        """Matrix ``<f_{t_i}, f_{t_j}>`` over all node pairs."""
        if self.is_factored:
            out = self.factors[0] @ self.factors[0].T
            for g in self.factors[1:]:
                out = out * (g @ g.T)
            return out / math.factorial(self.order)
        ts = self.kernels
        G = np.empty((self.n_nodes, self.n_nodes))
        for i in range(self.n_nodes):
            for j in range(i, self.n_nodes):
                G[i, j] = G[j, i] = inner(ts[i], ts[j])
        return G

    # ----------------------------------------------------------- serialise
    def to_json(self) -> dict:
        return {
            "label": self.label,
            "order": self.order,
            "dim": self.dim,
            "grid": self.grid.tolist(),
            "kernels": [t.to_json() for t in self.kernels],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "KernelPath":
        return cls(obj["grid"], tensors=[SymTensor.from_json(t) for t in obj["kernels"]], label=obj.get("label", "custom"))

    def __repr__(self) -> str:
        mode = "factored" if self.is_factored else "explicit"
        return f"KernelPath(label={self.label!r}, order={self.order}, dim={self.dim}, nodes={self.n_nodes}, {mode})"


# ---------------------------------------------------------------- builders
def brownian_kernel(M: int, grid=None, offset: int = 0, dim: int | None = None) -> KernelPath:
    """Kernel of Brownian motion in the step basis of the grid.

    ``f_t = 1_{[0,t]}`` has coordinates ``sqrt(Delta_i)`` on every cell
    contained in ``[0, t]``.  The cells occupy coordinates
    ``offset, ..., offset + M - 1`` of an ambient space of size ``dim``.
    """
    grid = uniform_grid(M) if grid is None else _check_grid(grid)
    if grid.size - 1 != M:
        raise ValueError(f"need one basis vector per cell: M={M} but grid has {grid.size - 1} cells")
    if M < 2:
        raise ValueError("grid too coarse: need at least two cells")
    dim = offset + M if dim is None else dim
    if offset < 0 or offset + M > dim:
        raise ValueError(f"block [{offset}, {offset + M}) does not fit in dim={dim}")
    sq = np.sqrt(np.diff(grid))
    G = np.zeros((grid.size, dim))
    for k in range(1, grid.size):
        G[k, offset:offset + k] = sq[:k]
    return KernelPath(grid, factors=[G], label="brownian", dim=dim)


def fbm_increment_covariance(grid, hurst: float) -> np.ndarray:
    grid = _check_grid(grid)
    s, t = np.meshgrid(grid, grid, indexing="ij")
    h2 = 2.0 * hurst
    R = 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(s - t) ** h2)
    return R[1:, 1:] - R[1:, :-1] - R[:-1, 1:] + R[:-1, :-1]


def fbm_kernel(hurst: float, M: int, grid=None, offset: int = 0, dim: int | None = None) -> KernelPath:
    """Fractional Brownian kernel from a Cholesky factor of the increment covariance.

    The node values have exactly the fBm covariance; the kernel is a projection
    onto the ``M``-dimensional step space, hence labelled approximate.
    """
    if not 0 < hurst < 1:
        raise ValueError(f"Hurst index must lie in (0, 1), got {hurst}")
    grid = uniform_grid(M) if grid is None else _check_grid(grid)
    if grid.size - 1 != M:
        raise ValueError(f"need one basis vector per cell: M={M} but grid has {grid.size - 1} cells")
    dim = offset + M if dim is None else dim
    L = np.linalg.cholesky(fbm_increment_covariance(grid, hurst))
    G = np.zeros((grid.size, dim))
    G[1:, offset:offset + M] = np.cumsum(L, axis=0)
    return KernelPath(grid, factors=[G], label=f"fbm(H={hurst}, approximate)", dim=dim)


def product_kernel(paths) -> KernelPath:
    """Kernel of ``prod_i I_1(g^i_t)`` for order-1 paths on disjoint blocks."""
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one factor")
    if len(paths) == 1:
        return paths[0]
    grid = paths[0].grid
    for p in paths:
        if p.order != 1 or not p.is_factored:
            raise ValueError("product_kernel expects order-1 factored kernel paths")
        if p.grid.shape != grid.shape or np.max(np.abs(p.grid - grid)) > GRID_TOL:
            raise ValueError("factors must share the same grid")
        if p.dim != paths[0].dim:
            raise ValueError("factors must share the ambient dimension")
    label = "product(" + ", ".join(p.label for p in paths) + ")"
    return KernelPath(grid, factors=[p.factors[0] for p in paths], label=label)


def brownian_product_kernel(n: int, M: int, grid=None) -> KernelPath:
    """Product of ``n`` independent Brownian kernels on consecutive blocks."""
    dim = n * M
    return product_kernel([brownian_kernel(M, grid, offset=i * M, dim=dim) for i in range(n)])


def deterministic_kernel(values, grid, dim: int = 1) -> KernelPath:
    """Order-0 kernel path: ``X_t`` equals the given deterministic values."""
    values = np.asarray(values, dtype=float)
    grid = _check_grid(grid)
    if values.shape != grid.shape:
        raise ValueError("values must match the grid")
    return KernelPath(grid, tensors=[SymTensor.scalar(v, dim) for v in values], label="deterministic")


# ----------------------------------------------------------------- covariance
def covariance(k: KernelPath, s: float, t: float) -> float:
    """``R(s, t) = n! <f_s, f_t>`` at grid times."""
    i, j = k.node_index(s), k.node_index(t)
    if k.is_factored:
        out = 1.0
        for g in k.factors:
            out *= float(g[i] @ g[j])
        return out
    return math.factorial(k.order) * inner(k.tensor(i), k.tensor(j))


def covariance_matrix(k: KernelPath) -> np.ndarray:
    """``R(t_i, t_j)`` for all node pairs."""
    return math.factorial(k.order) * k.gram()


def rect_increments(R: np.ndarray) -> np.ndarray:
    """Elementary rectangular increments ``R([t_i,t_{i+1}] x [t_j,t_{j+1}])``."""
    R = np.asarray(R, dtype=float)
    return R[1:, 1:] - R[1:, :-1] - R[:-1, 1:] + R[:-1, :-1]


def rect_increment(k: KernelPath, rect, r: int) -> SymTensor:
    """``f_{s,t} (x)^_r f_{u,v}`` for ``rect = (s, t, u, v)`` on the grid."""
    if not 1 <= r <= k.order:
        raise ValueError(f"r={r} outside [1, {k.order}]")
    s, t, u, v = rect
    a = k.increment(k.node_index(s), k.node_index(t))
    b = k.increment(k.node_index(u), k.node_index(v))
    return contract(a, b, r)


@dataclass(frozen=True)
class Control2D:
    """Values of a 2D control on elementary grid rectangles."""

    grid: np.ndarray
    values: np.ndarray
    rho: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        n = len(self.grid) - 1
        if v.shape != (n, n):
            raise ValueError(f"values must have shape ({n}, {n})")
        if np.any(v < 0):
            raise ValueError("control values must be non-negative")


# ---------------------------------------------------------- 2D variation
def _partition_membership(n_cells: int):
    """Stacked block-indicator rows for every partition of ``n_cells`` cells."""
    rows, groups = [], []
    for g, mask in enumerate(range(2 ** max(n_cells - 1, 0))):
        cuts = [0] + [c + 1 for c in range(n_cells - 1) if mask >> c & 1] + [n_cells]
        for a, b in zip(cuts[:-1], cuts[1:]):
            row = np.zeros(n_cells)
            row[a:b] = 1.0
            rows.append(row)
            groups.append(g)
    return np.array(rows), np.array(groups), 2 ** max(n_cells - 1, 0)


def _exhaustive_2d(D: np.ndarray, rho: float) -> float:
    nr, nc = D.shape
    Ar, gr, kr = _partition_membership(nr)
    Ac, gc, kc = _partition_membership(nc)
    T = np.abs(Ar @ D @ Ac.T) ** rho
    Gr = np.zeros((kr, Ar.shape[0]))
    Gr[gr, np.arange(Ar.shape[0])] = 1.0
    Gc = np.zeros((kc, Ac.shape[0]))
    Gc[gc, np.arange(Ac.shape[0])] = 1.0
    return float(np.max(Gr @ T @ Gc.T))


def _coarse_sum(D: np.ndarray, rcuts, ccuts) -> np.ndarray:
    S = np.add.reduceat(D, rcuts[:-1], axis=0)
    return np.add.reduceat(S, ccuts[:-1], axis=1)


def variation_2d(values, rho: float, region=None, max_exact_cells: int = 10, return_exact: bool = False):
    """2D ``rho``-variation from elementary rectangular increments.

    Parameters
    ----------
    values : ndarray of shape ``(N, N)`` or :class:`Control2D`
        Signed increments on elementary rectangles; block increments are sums.
    rho : float
        Exponent, ``rho >= 1``.
    region : tuple of int, optional
        Node indices ``(i0, i1, j0, j1)`` of ``[t_i0, t_i1] x [t_j0, t_j1]``.
    max_exact_cells : int
        Regions with at most this many cells per side are searched
        exhaustively; larger ones return a lower bound from nested coarsenings.
    return_exact : bool
        Also return whether the value is the exact grid supremum.
    """
    if rho < 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    D = np.asarray(values.values if isinstance(values, Control2D) else values, dtype=float)
    if D.ndim != 2:
        raise ValueError("values must be a matrix of rectangle increments")
    if region is None:
        region = (0, D.shape[0], 0, D.shape[1])
    i0, i1, j0, j1 = (int(x) for x in region)
    if not (0 <= i0 <= i1 <= D.shape[0] and 0 <= j0 <= j1 <= D.shape[1]):
        raise ValueError(f"region {region} is not on the grid")
    D = D[i0:i1, j0:j1]
    if D.size == 0:
        return (0.0, True) if return_exact else 0.0
    if rho == 1.0:
        # triangle inequality: the finest partition is optimal
        val, exact = float(np.sum(np.abs(D))), True
    elif max(D.shape) <= max_exact_cells:
        val, exact = _exhaustive_2d(D, rho) ** (1.0 / rho), True
    else:
        best = np.sum(np.abs(D) ** rho)
        for side in range(2, max_exact_cells + 1):
            rc = np.unique(np.linspace(0, D.shape[0], side + 1).round().astype(int))
            cc = np.unique(np.linspace(0, D.shape[1], side + 1).round().astype(int))
            best = max(best, _exhaustive_2d(_coarse_sum(D, rc, cc), rho))
        val, exact = best ** (1.0 / rho), False
    return (val, exact) if return_exact else val


def hilbert_variation(vectors: np.ndarray, rho: float) -> np.ndarray:
    """Grid ``rho``-variation of a vector-valued path over all node intervals.

    Returns the matrix ``V[a, b] = ||g||_{rho-var; [t_a, t_b]}``.
    """
    cost = pairwise_distances(np.asarray(vectors, dtype=float)) ** rho
    return all_interval_partition_sums(cost) ** (1.0 / rho)


def example_control(k: KernelPath, rho: float):
    """Explicit control for products of independent Gaussian factors.

    ``omega([s,t] x [u,v]) = 2^{rho-1} (sum_i ||g^i||^rho_[s,t] ||g^i||^rho_[u,v])
    * sum_i (||g^i||_[0,1] + ||g^i_0||)^{2 rho}``, with the variation norms
    computed over grid partitions.  Returns a callable on node indices.
    """
    if not k.is_factored:
        raise ValueError("the explicit control needs a factored product kernel")
    V = [hilbert_variation(g, rho) for g in k.factors]
    last = k.n_nodes - 1
    const = sum((v[0, last] + np.linalg.norm(g[0])) ** (2 * rho) for v, g in zip(V, k.factors))
    scale = 2.0 ** (rho - 1) * const

    def omega(i0, i1, j0, j1):
        return scale * sum(v[min(i0, i1), max(i0, i1)] ** rho * v[min(j0, j1), max(j0, j1)] ** rho for v in V)

    return omega


@dataclass
class AssumptionReport:
    """Outcome of the covariance and contraction regularity checks."""

    rho: float
    assumption1_pass: bool
    assumption1_max_ratio: float
    assumption1_exact: bool
    assumption2_pass: bool | None = None
    assumption2_max_ratio: dict = field(default_factory=dict)
    diagonal_normalized: bool | None = None
    diagonal_max_ratio: float | None = None
    status: str = "grid-certified"
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "assumption1_pass": self.assumption1_pass,
            "assumption1_max_ratio": self.assumption1_max_ratio,
            "assumption1_exact": self.assumption1_exact,
            "assumption2_pass": self.assumption2_pass,
            "assumption2_max_ratio": {str(r): v for r, v in self.assumption2_max_ratio.items()},
            "diagonal_normalized": self.diagonal_normalized,
            "diagonal_max_ratio": self.diagonal_max_ratio,
            "status": self.status,
            "violations": self.violations[:20],
        }


def check_assumptions(k: KernelPath, rho: float, control=None, tol: float = 1e-12, max_pairs: int = 4000, seed: int = 0) -> AssumptionReport:
    """Grid check of the covariance and contraction regularity conditions.

    Clause 1: ``||R||^rho_{rho-var; [s,t]^2} <= |t - s|`` on every grid interval.
    Clause 2 (if ``control`` is given, or the kernel is a factored product with
    ``n >= 2``): ``||f_{s,t} (x)^_r f_{u,v}|| <= omega^{1/rho}`` for all
    ``1 <= r <= n`` over grid interval pairs (a random subset when there are
    more than ``max_pairs``).  ``control`` is a callable on node indices
    ``(i0, i1, j0, j1)``.
    """
    grid = k.grid
    D = rect_increments(covariance_matrix(k))
    N = grid.size - 1
    worst, all_exact, viol = 0.0, True, []
    for a in range(N):
        for b in range(a + 1, N + 1):
            v, exact = variation_2d(D, rho, (a, b, a, b), return_exact=True)
            all_exact &= exact
            ratio = v ** rho / (grid[b] - grid[a])
            worst = max(worst, ratio)
            if ratio > 1 + tol:
                viol.append({"clause": 1, "interval": [float(grid[a]), float(grid[b])], "ratio": float(ratio)})
    rep = AssumptionReport(rho=rho, assumption1_pass=worst <= 1 + tol, assumption1_max_ratio=float(worst), assumption1_exact=bool(all_exact), violations=viol)

    if control is None and k.is_factored and k.order >= 2:
        control = example_control(k, rho)
    if control is None:
        return rep
    intervals = [(a, b) for a in range(N) for b in range(a + 1, N + 1)]
    pairs = [(p, q) for p in intervals for q in intervals]
    if len(pairs) > max_pairs:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[i] for i in pick]
    incs = {iv: k.increment(*iv) for iv in intervals}
    ok = True
    for r in range(1, k.order + 1):
        mr = 0.0
        for (a, b), (c, d) in pairs:
            w = control(a, b, c, d)
            nrm = contract(incs[(a, b)], incs[(c, d)], r).norm()
            if nrm == 0:
                continue
            ratio = nrm / w ** (1.0 / rho) if w > 0 else math.inf
            mr = max(mr, ratio)
            if ratio > 1 + tol:
                ok = False
                rep.violations.append({"clause": 2, "r": r, "rect": [a, b, c, d], "ratio": float(ratio)})
        rep.assumption2_max_ratio[r] = float(mr)
    rep.assumption2_pass = ok
    diag = max(control(a, b, a, b) / (grid[b] - grid[a]) for a, b in intervals)
    rep.diagonal_max_ratio = float(diag)
    rep.diagonal_normalized = bool(diag <= 1 + tol)
    return rep
