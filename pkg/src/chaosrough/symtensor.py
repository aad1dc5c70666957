"""Sparse symmetric tensors over a truncated Hilbert space R^M.

A :class:`SymTensor` of order ``n`` is stored as a map from sorted multi-indices
``(i_1 <= ... <= i_n)`` to coefficients in the *un-normalised* symmetrised
monomial basis

    e_alpha = e_{i_1} (x)^ ... (x)^ e_{i_n} = (1/n!) sum_sigma e_{i_sigma(1)} (x) ... (x) e_{i_sigma(n)}.

With this convention ``<e_alpha, e_alpha> = alpha!/n!`` where ``alpha!`` is the
product of the factorials of the index multiplicities, and a multiple
Wiener-Ito integral of a basis element is a plain product of Hermite
polynomials (see :mod:`chaosrough.chaos`).

Indices are 0-based.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "SymTensor",
    "symmetrize_outer",
    "inner",
    "contract",
    "power",
    "multiplicity_factorial",
    "partial_pair",
]

_ZERO_TOL = 0.0


def multiplicity_factorial(idx: Iterable[int]) -> int:
    """Return ``alpha!``, the product of factorials of index multiplicities."""
    out = 1
    for c in Counter(idx).values():
        out *= math.factorial(c)
    return out


def _counter_to_idx(c: Mapping[int, int]) -> tuple[int, ...]:
    return tuple(sorted(itertools.chain.from_iterable([i] * k for i, k in c.items())))


def _sub_multisets(common: Counter, r: int):
    """Yield all sub-multisets (as Counters) of ``common`` with total size ``r``."""
    keys = sorted(common)
    if r == 0:
        yield Counter()
        return

    def rec(pos, remaining, acc):
        if remaining == 0:
            yield Counter({k: v for k, v in acc.items() if v})
            return
        if pos == len(keys):
            return
        key = keys[pos]
        for take in range(min(common[key], remaining), -1, -1):
            acc[key] = take
            yield from rec(pos + 1, remaining - take, acc)
        acc[key] = 0

    yield from rec(0, r, {})


class SymTensor:
    """Immutable symmetric tensor of a given order over R^dim.

    Parameters
    ----------
    order : int
        Tensor order ``n``.
    dim : int
        Truncation size ``M`` of the underlying Hilbert space.
    coeffs : mapping, optional
        Map from multi-index (any ordering, it gets sorted) to coefficient.
        Repeated keys that sort to the same multi-index are summed.
    """

    __slots__ = ("_order", "_dim", "_coeffs", "_hash")

    def __init__(self, order: int, dim: int, coeffs: Mapping[tuple[int, ...], float] | None = None):
        if order < 0:
            raise ValueError(f"order must be non-negative, got {order}")
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        store: dict[tuple[int, ...], float] = {}
        for idx, c in (coeffs or {}).items():
            key = tuple(sorted(int(i) for i in idx))
            if len(key) != order:
                raise ValueError(f"multi-index {idx} does not have length {order}")
            if key and (key[0] < 0 or key[-1] >= dim):
                raise ValueError(f"multi-index {idx} out of range for dim={dim}")
            store[key] = store.get(key, 0.0) + float(c)
        store = {k: v for k, v in store.items() if v != _ZERO_TOL}
        self._order = int(order)
        self._dim = int(dim)
        self._coeffs = MappingProxyType(store)
        self._hash = None

    # ------------------------------------------------------------------ ctors
    @classmethod
    def scalar(cls, value: float, dim: int) -> "SymTensor":
        return cls(0, dim, {(): value})

    @classmethod
    def zeros(cls, order: int, dim: int) -> "SymTensor":
        return cls(order, dim, {})

    @classmethod
    def basis(cls, i: int, dim: int) -> "SymTensor":
        """The order-1 basis vector ``e_i``."""
        return cls(1, dim, {(i,): 1.0})

    @classmethod
    def monomial(cls, idx: Iterable[int], dim: int, coeff: float = 1.0) -> "SymTensor":
        idx = tuple(idx)
        return cls(len(idx), dim, {idx: coeff})

    @classmethod
    def from_vector(cls, v) -> "SymTensor":
        v = np.asarray(v, dtype=float).ravel()
        return cls(1, v.size, {(i,): x for i, x in enumerate(v) if x != 0.0})

    @classmethod
    def from_dense(cls, arr, atol: float = 0.0) -> "SymTensor":
        """Build from a full (assumed symmetric) array of shape ``(M,)*n``."""
        arr = np.asarray(arr, dtype=float)
        n = arr.ndim
        if n == 0:
            raise ValueError("use SymTensor.scalar for order-0 tensors")
        dim = arr.shape[0]
        if any(s != dim for s in arr.shape):
            raise ValueError(f"array must be hypercubic, got shape {arr.shape}")
        coeffs = {}
        nf = math.factorial(n)
        for idx in itertools.combinations_with_replacement(range(dim), n):
            val = arr[idx]
            if abs(val) > atol:
                coeffs[idx] = val * nf / multiplicity_factorial(idx)
        return cls(n, dim, coeffs)

    # -------------------------------------------------------------- accessors
    @property
    def order(self) -> int:
        return self._order

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def coeffs(self) -> Mapping[tuple[int, ...], float]:
        return self._coeffs

    def __len__(self) -> int:
        return len(self._coeffs)

    def __iter__(self):
        return iter(self._coeffs.items())

    def __getitem__(self, idx) -> float:
        return self._coeffs.get(tuple(sorted(idx)), 0.0)

    def support(self) -> set[int]:
        return {i for idx in self._coeffs for i in idx}

    def is_zero(self, atol: float = 0.0) -> bool:
        return all(abs(c) <= atol for c in self._coeffs.values())

    def value(self) -> float:
        """Scalar value of an order-0 tensor."""
        if self._order != 0:
            raise ValueError("value() is only defined for order-0 tensors")
        return self._coeffs.get((), 0.0)

    # ------------------------------------------------------------- arithmetic
    def _check_same(self, other: "SymTensor"):
        if not isinstance(other, SymTensor):
            raise TypeError(f"expected SymTensor, got {type(other).__name__}")
        if other._dim != self._dim:
            raise ValueError(f"dimension mismatch: {self._dim} vs {other._dim}")
        if other._order != self._order:
            raise ValueError(f"order mismatch: {self._order} vs {other._order}")

    def __add__(self, other: "SymTensor") -> "SymTensor":
        self._check_same(other)
        out = dict(self._coeffs)
        for k, v in other._coeffs.items():
            out[k] = out.get(k, 0.0) + v
        return SymTensor(self._order, self._dim, out)

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        return self + (-1.0) * other

    def __mul__(self, c) -> "SymTensor":
        c = float(c)
        return SymTensor(self._order, self._dim, {k: c * v for k, v in self._coeffs.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "SymTensor":
        return (-1.0) * self

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymTensor):
            return NotImplemented
        return (self._order, self._dim, dict(self._coeffs)) == (other._order, other._dim, dict(other._coeffs))

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._order, self._dim, frozenset(self._coeffs.items())))
        return self._hash

    def allclose(self, other: "SymTensor", atol: float = 1e-10) -> bool:
        self._check_same(other)
        keys = set(self._coeffs) | set(other._coeffs)
        return all(abs(self[k] - other[k]) <= atol for k in keys)

    def __repr__(self) -> str:
        items = ", ".join(f"{k}: {v:.6g}" for k, v in list(self._coeffs.items())[:6])
        more = ", ..." if len(self._coeffs) > 6 else ""
        return f"SymTensor(order={self._order}, dim={self._dim}, {{{items}{more}}})"

    # ------------------------------------------------------------------ norms
    def norm(self) -> float:
        return math.sqrt(max(inner(self, self), 0.0))

    # -------------------------------------------------------------- conversion
    def to_dense(self) -> np.ndarray:
        """Full symmetric array of shape ``(dim,)*order``; test/oracle use."""
        n = self._order
        if n == 0:
            return np.array(self.value())
        arr = np.zeros((self._dim,) * n)
        nf = math.factorial(n)
        for idx, c in self._coeffs.items():
            entry = c * multiplicity_factorial(idx) / nf
            for perm in set(itertools.permutations(idx)):
                arr[perm] = entry
        return arr

    def to_vector(self) -> np.ndarray:
        if self._order != 1:
            raise ValueError("to_vector() is only defined for order-1 tensors")
        v = np.zeros(self._dim)
        for (i,), c in self._coeffs.items():
            v[i] = c
        return v

    def to_json(self) -> dict:
        return {
            "order": self._order,
            "dim": self._dim,
            "entries": [{"idx": list(k), "c": v} for k, v in sorted(self._coeffs.items())],
        }

    @classmethod
    def from_json(cls, obj: dict | str) -> "SymTensor":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(obj["order"], obj["dim"], {tuple(e["idx"]): e["c"] for e in obj["entries"]})

    # ----------------------------------------------------- partial contraction
    def partial(self, idx: Iterable[int]) -> "SymTensor":
        """Contract ``k`` slots against ``e_{i_1} (x) ... (x) e_{i_k}``.

        Returns the symmetric order ``n-k`` tensor ``<f, e_{i_1} (x) ... (x) e_{i_k}>``.
        The ordering of ``idx`` is irrelevant because ``f`` is symmetric.
        """
        kappa = Counter(int(i) for i in idx)
        k = sum(kappa.values())
        n = self._order
        if k > n:
            raise ValueError(f"cannot contract {k} slots of an order-{n} tensor")
        nf = math.factorial(n)
        rest_f = math.factorial(n - k)
        out: dict[tuple[int, ...], float] = {}
        for alpha, c in self._coeffs.items():
            ca = Counter(alpha)
            if any(ca[i] < m for i, m in kappa.items()):
                continue
            rem = ca - kappa
            key = _counter_to_idx(rem)
            w = multiplicity_factorial(alpha) / nf * rest_f / multiplicity_factorial(key)
            out[key] = out.get(key, 0.0) + c * w
        return SymTensor(n - k, self._dim, out)


def _check_dims(a: SymTensor, b: SymTensor):
    if not isinstance(a, SymTensor) or not isinstance(b, SymTensor):
        raise TypeError("arguments must be SymTensor instances")
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def symmetrize_outer(a: SymTensor, b: SymTensor) -> SymTensor:
    """Symmetric tensor product ``a (x)^ b``."""
    _check_dims(a, b)
    out: dict[tuple[int, ...], float] = {}
    for ia, ca in a.coeffs.items():
        for ib, cb in b.coeffs.items():
            key = tuple(sorted(ia + ib))
            out[key] = out.get(key, 0.0) + ca * cb
    return SymTensor(a.order + b.order, a.dim, out)


def inner(a: SymTensor, b: SymTensor) -> float:
    """Hilbert-Schmidt inner product of two symmetric tensors of equal order."""
    _check_dims(a, b)
    if a.order != b.order:
        raise ValueError(f"order mismatch: {a.order} vs {b.order}")
    if len(a) > len(b):
        a, b = b, a
    nf = math.factorial(a.order)
    bc = b.coeffs
    total = 0.0
    for idx, c in a.coeffs.items():
        d = bc.get(idx)
        if d is not None:
            total += c * d * multiplicity_factorial(idx) / nf
    return total


def contract(a: SymTensor, b: SymTensor, r: int) -> SymTensor:
    """Symmetric contraction ``a (x)^_r b`` of degree ``r``.

    ``r`` slots of ``a`` are paired with ``r`` slots of ``b`` and the remaining
    ``n + m - 2r`` slots are symmetrised.  ``r = 0`` is :func:`symmetrize_outer`
    and ``r = n = m`` gives :func:`inner` as an order-0 tensor.
    """
    _check_dims(a, b)
    n, m = a.order, b.order
    if not 0 <= r <= min(n, m):
        raise ValueError(f"contraction degree r={r} outside [0, {min(n, m)}]")
    if r == 0:
        return symmetrize_outer(a, b)

    nf, mf, rf = math.factorial(n), math.factorial(m), math.factorial(r)
    nrf, mrf = math.factorial(n - r), math.factorial(m - r)

    b_items = [(ib, cb, Counter(ib), multiplicity_factorial(ib)) for ib, cb in b.coeffs.items()]
    by_index: dict[int, list[int]] = {}
    for pos, (ib, *_rest) in enumerate(b_items):
        for i in set(ib):
            by_index.setdefault(i, []).append(pos)

    out: dict[tuple[int, ...], float] = {}
    for ia, ca in a.coeffs.items():
        cnt_a = Counter(ia)
        fa = multiplicity_factorial(ia)
        candidates = sorted({pos for i in cnt_a for pos in by_index.get(i, ())})
        for pos in candidates:
            ib, cb, cnt_b, fb = b_items[pos]
            common = cnt_a & cnt_b
            if sum(common.values()) < r:
                continue
            base = ca * cb * (fa / nf) * (fb / mf) * rf * nrf * mrf
            for kappa in _sub_multisets(common, r):
                ra, rb = cnt_a - kappa, cnt_b - kappa
                w = base / (
                    multiplicity_factorial(_counter_to_idx(kappa))
                    * multiplicity_factorial(_counter_to_idx(ra))
                    * multiplicity_factorial(_counter_to_idx(rb))
                )
                key = tuple(sorted(_counter_to_idx(ra) + _counter_to_idx(rb)))
                out[key] = out.get(key, 0.0) + w
    return SymTensor(n + m - 2 * r, a.dim, out)


def power(h: SymTensor, k: int) -> SymTensor:
    """Tensor power ``h^{(x) k}`` of an order-1 tensor."""
    if h.order != 1:
        raise ValueError(f"power() expects an order-1 tensor, got order {h.order}")
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    if k == 0:
        return SymTensor.scalar(1.0, h.dim)
    vals = {i: c for (i,), c in h.coeffs.items()}
    kf = math.factorial(k)
    out = {}
    for idx in itertools.combinations_with_replacement(sorted(vals), k):
        c = kf / multiplicity_factorial(idx)
        for i in idx:
            c *= vals[i]
        out[idx] = c
    return SymTensor(k, h.dim, out)


def partial_pair(f: SymTensor, g: SymTensor) -> SymTensor:
    """Contract all slots of ``g`` against the leading slots of ``f``.

    Returns the order ``f.order - g.order`` tensor ``<f, g>`` where ``g`` may
    stand for any (symmetrised) product ``h_1 (x) ... (x) h_k``; symmetry of
    ``f`` makes the slot choice irrelevant.
    """
    _check_dims(f, g)
    if g.order > f.order:
        raise ValueError(f"cannot pair an order-{g.order} tensor into order {f.order}")
    out = SymTensor.zeros(f.order - g.order, f.dim)
    acc: dict[tuple[int, ...], float] = {}
    for kappa, c in g.coeffs.items():
        for key, v in f.partial(kappa).coeffs.items():
            acc[key] = acc.get(key, 0.0) + c * v
    if acc:
        out = SymTensor(f.order - g.order, f.dim, acc)
    return out
