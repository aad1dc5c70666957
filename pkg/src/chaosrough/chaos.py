"""Hermite polynomials, multiple Wiener-Ito integrals and Malliavin derivatives.

A realisation of the isonormal process is represented by its coordinates
``xi_i = W(e_i)`` on the truncated basis.  For a basis monomial with index
multiplicities ``k_1, ..., k_m`` on coordinates ``j_1, ..., j_m`` the multiple
integral is ``H_{k_1}(xi_{j_1}) ... H_{k_m}(xi_{j_m})``; general kernels are
evaluated by linearity.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ._rng import gaussian_block, iter_gaussian_batches
from .symtensor import SymTensor, contract, partial_pair

__all__ = [
    "hermite",
    "hermite_table",
    "GaussianSample",
    "sample_gaussian",
    "ChaosVariable",
    "MalliavinDerivative",
    "eval_chaos",
    "eval_sum",
    "product_expand",
    "malliavin",
    "inner_dk",
    "moment_ratio",
]


def hermite(k: int, x):
    """Probabilists' Hermite polynomial ``H_k`` via the three-term recurrence.

    Parameters
    ----------
    k : int
        Degree, ``k >= 0``.
    x : float or array_like
        Evaluation points.
    """
    if k < 0:
        raise ValueError(f"Hermite degree must be non-negative, got {k}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if k == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for j in range(1, k):
        h_prev, h = h, x * h - j * h_prev
    return h if h.ndim else float(h)


def hermite_table(n: int, x) -> np.ndarray:
    """Stack ``[H_0(x), ..., H_n(x)]`` along a new leading axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n + 1,) + x.shape)
    out[0] = 1.0
    if n >= 1:
        out[1] = x
    for j in range(1, n):
        out[j + 1] = x * out[j] - j * out[j - 1]
    return out


@dataclass(frozen=True)
class GaussianSample:
    """One realisation ``omega`` given by its coordinates ``xi_i = W(e_i)``."""

    xi: np.ndarray
    seed: int | None = None
    index: int | None = None

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.ndim != 1:
            raise ValueError(f"xi must be a vector, got shape {xi.shape}")
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self) -> int:
        return self.xi.size

    @classmethod
    def draw(cls, dim: int, seed: int, index: int = 0) -> "GaussianSample":
        """Sample ``index`` of the reproducible stream ``seed``."""
        return cls(gaussian_block(seed, index, 1, dim)[0], seed=seed, index=index)


def sample_gaussian(dim: int, count: int, seed: int, start: int = 0) -> np.ndarray:
    """Array of shape ``(count, dim)`` holding samples ``start..start+count-1``."""
    return gaussian_block(seed, start, count, dim)


def _as_xi(omega, dim: int) -> np.ndarray:
    xi = omega.xi if isinstance(omega, GaussianSample) else np.asarray(omega, dtype=float)
    if xi.shape[-1] != dim:
        raise ValueError(f"sample has dimension {xi.shape[-1]}, kernel expects {dim}")
    return xi


@dataclass(frozen=True)
class ChaosVariable:
    """The random variable ``I_n(f)`` for a symmetric kernel ``f``."""

    kernel: SymTensor
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.kernel, SymTensor):
            raise TypeError("kernel must be a SymTensor")

    @property
    def order(self) -> int:
        return self.kernel.order

    @property
    def dim(self) -> int:
        return self.kernel.dim

    def __add__(self, other: "ChaosVariable") -> "ChaosVariable":
        return ChaosVariable(self.kernel + other.kernel)

    def __mul__(self, c) -> "ChaosVariable":
        return ChaosVariable(self.kernel * c)

    __rmul__ = __mul__

    def _dense_low_order(self):
        if "dense" not in self._cache:
            self._cache["dense"] = self.kernel.to_dense()
        return self._cache["dense"]

    def evaluate(self, xi) -> np.ndarray | float:
        """Evaluate at one sample (shape ``(M,)``) or a batch (shape ``(S, M)``)."""
        xi = _as_xi(xi, self.dim)
        single = xi.ndim == 1
        x2 = np.atleast_2d(xi)
        n = self.order
        if n == 0:
            out = np.full(x2.shape[0], self.kernel.value())
        elif n == 1:
            out = x2 @ self.kernel.to_vector()
        elif n == 2 and self.dim <= 2048 and len(self.kernel) > 4 * self.dim:
            a = self._dense_low_order()
            out = np.einsum("si,ij,sj->s", x2, a, x2) - np.trace(a)
        else:
            out = self._evaluate_monomials(x2)
        return float(out[0]) if single else out

    def _evaluate_monomials(self, x2: np.ndarray) -> np.ndarray:
        used = sorted(self.kernel.support())
        pos = {j: p for p, j in enumerate(used)}
        table = hermite_table(self.order, x2[:, used])
        out = np.zeros(x2.shape[0])
        for idx, c in self.kernel.coeffs.items():
            term = np.full(x2.shape[0], c)
            for j, k in Counter(idx).items():
                term = term * table[k, :, pos[j]]
            out += term
        return out


def eval_chaos(v: ChaosVariable, omega) -> np.ndarray | float:
    """Evaluate ``I_n(f)`` at a :class:`GaussianSample` or coordinate array."""
    return v.evaluate(omega)


def eval_sum(terms, omega) -> np.ndarray | float:
    """Pointwise sum of a list of chaos variables (a finite chaos expansion)."""
    terms = list(terms)
    if not terms:
        raise ValueError("empty chaos expansion")
    total = terms[0].evaluate(omega)
    for t in terms[1:]:
        total = total + t.evaluate(omega)
    return total


def product_expand(a: ChaosVariable, b: ChaosVariable) -> list[ChaosVariable]:
    """Chaos decomposition of ``I_n(f) I_m(g)``.

    Term ``r`` is ``r! C(n, r) C(m, r) I_{n+m-2r}(f (x)^_r g)`` for
    ``r = 0, ..., min(n, m)``.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    n, m = a.order, b.order
    out = []
    for r in range(min(n, m) + 1):
        coef = math.factorial(r) * math.comb(n, r) * math.comb(m, r)
        out.append(ChaosVariable(contract(a.kernel, b.kernel, r) * coef))
    return out


class MalliavinDerivative:
    """``D^k I_n(f)`` as a symmetric-tensor-valued chaos variable.

    The component along ``e_{i_1} (x) ... (x) e_{i_k}`` is the chaos variable
    ``n!/(n-k)! I_{n-k}(<f, e_{i_1} (x) ... (x) e_{i_k}>)``.  Because the kernel
    is symmetric only sorted multi-indices are stored.
    """

    def __init__(self, kernel: SymTensor, k: int):
        self.kernel = kernel
        self.k = int(k)
        n = kernel.order
        self.scale = math.factorial(n) / math.factorial(n - self.k)
        comps: dict[tuple[int, ...], ChaosVariable] = {}
        for idx in kernel.coeffs:
            for kappa in set(itertools.combinations(idx, self.k)):
                if kappa not in comps:
                    comps[kappa] = ChaosVariable(kernel.partial(kappa) * self.scale)
        self.components = comps

    @property
    def dim(self) -> int:
        return self.kernel.dim

    @property
    def chaos_order(self) -> int:
        return self.kernel.order - self.k

    def is_deterministic(self) -> bool:
        return self.chaos_order == 0

    def component(self, idx) -> ChaosVariable:
        key = tuple(sorted(idx))
        if key in self.components:
            return self.components[key]
        return ChaosVariable(SymTensor.zeros(self.chaos_order, self.dim))

    def pair(self, g: SymTensor) -> ChaosVariable:
        """``<D^k I_n(f), g>`` for an order-``k`` tensor ``g`` (e.g. ``h^{(x)k}``)."""
        if g.order != self.k:
            raise ValueError(f"expected an order-{self.k} tensor, got order {g.order}")
        return ChaosVariable(partial_pair(self.kernel, g) * self.scale)

    def evaluate(self, xi) -> np.ndarray:
        """Dense array of shape ``(M,)*k`` (or ``(S,) + (M,)*k`` for a batch)."""
        xi = _as_xi(xi, self.dim)
        lead = () if xi.ndim == 1 else (xi.shape[0],)
        out = np.zeros(lead + (self.dim,) * self.k)
        for kappa, comp in self.components.items():
            val = comp.evaluate(xi)
            for perm in set(itertools.permutations(kappa)):
                out[(Ellipsis,) + perm] = val
        return out


def malliavin(v: ChaosVariable, k: int, allow_zero: bool = False) -> MalliavinDerivative:
    """``k``-th Malliavin derivative of a chaos variable.

    Parameters
    ----------
    v : ChaosVariable
        The variable ``I_n(f)``.
    k : int
        Derivative order, ``0 <= k <= n``.
    allow_zero : bool
        If True, ``k > n`` returns an identically zero derivative instead of
        raising.
    """
    n = v.order
    if k < 0:
        raise ValueError(f"derivative order must be non-negative, got {k}")
    if k > n:
        if not allow_zero:
            raise ValueError(f"D^{k} of an order-{n} chaos variable vanishes; pass allow_zero=True")
        zero = MalliavinDerivative(SymTensor.zeros(k, v.dim), k)
        return zero
    return MalliavinDerivative(v.kernel, k)


def inner_dk(f: SymTensor, g: SymTensor, k: int) -> list[ChaosVariable]:
    """Chaos decomposition of ``<D^k I_n(f), D^k I_n(g)>``.

    Uses ``(n!/(n-k)!)^2 sum_r r! C(n-k, r)^2 I_{2n-2k-2r}(f (x)^_{r+k} g)``.
    """
    if f.order != g.order:
        raise ValueError(f"order mismatch: {f.order} vs {g.order}")
    if f.dim != g.dim:
        raise ValueError(f"dimension mismatch: {f.dim} vs {g.dim}")
    n = f.order
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    pre = (math.factorial(n) / math.factorial(n - k)) ** 2
    out = []
    for r in range(n - k + 1):
        coef = pre * math.factorial(r) * math.comb(n - k, r) ** 2
        out.append(ChaosVariable(contract(f, g, r + k) * coef))
    return out


def moment_ratio(v: ChaosVariable, p: float, q: float, samples: int = 10**5, seed: int = 0) -> tuple[float, float]:
    """Empirical ``||X||_q / ||X||_p`` and the hypercontractive bound.

    Returns
    -------
    ratio : float
        Monte Carlo estimate of ``(E|X|^q)^{1/q} / (E|X|^p)^{1/p}``.
    bound : float
        ``((q-1)/(p-1))^{n/2}``.
    """
    if not 1 < p <= q:
        raise ValueError(f"need 1 < p <= q, got p={p}, q={q}")
    if samples < 10**4:
        raise ValueError(f"at least 10^4 samples required, got {samples}")
    sp = sq = 0.0
    for _, xi in iter_gaussian_batches(seed, samples, v.dim, batch=65536):
        x = np.abs(np.asarray(v.evaluate(xi)))
        sp += np.sum(x ** p)
        sq += np.sum(x ** q)
    mp, mq = sp / samples, sq / samples
    if not (np.isfinite(mp) and np.isfinite(mq)) or mp <= 0:
        raise ValueError("non-finite or degenerate sample moments")
    ratio = mq ** (1.0 / q) / mp ** (1.0 / p)
    bound = ((q - 1.0) / (p - 1.0)) ** (v.order / 2.0)
    return float(ratio), float(bound)
