"""Rough differential equations driven by level-2 lifts.

The stepper is the explicit second-order (Davie) scheme

    Y <- Y + V_i(Y) Delta X^i + (DV_j V_i)(Y) XX^{ij}

applied on every grid segment (optionally split into equal sub-segments, each
carrying its share of the segment integral).  The Jacobian is propagated with
the same scheme on the augmented system ``(Y, J)``.  Malliavin derivatives of
the solution are obtained by differentiating the scheme along the enhanced
driver ``(X, DX, D^2 X)``, which discretises the linear equations satisfied by
``DY`` and ``D^2 Y``.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .enhanced import EnhancedSample, draw_xi, enhance
from .kernels import KernelPath
from .roughlift import Level2Path

__all__ = [
    "VectorFieldSet",
    "SolutionPath",
    "affine_fields",
    "tanh_fields",
    "zero_fields",
    "solve",
    "jacobian",
    "malliavin_rde",
    "moment_scan",
    "set_partitions",
    "dky_terms",
]


@dataclass(frozen=True)
class VectorFieldSet:
    """Vector fields ``V_1, ..., V_d`` on ``R^e`` with analytic derivatives.

    Attributes
    ----------
    e, d : int
        State and driver dimensions.
    V : callable
        ``V(y) -> (e, d)``; column ``i`` is ``V_i(y)``.
    jac : callable
        ``jac(y)[a, b, i] = d V^a_i / d y^b``.
    hess : callable
        ``hess(y)[a, b, c, i] = d^2 V^a_i / d y^b d y^c``.
    third : callable, optional
        ``third(y)[a, b, c, f, i]``; needed for second Malliavin derivatives.
    drift : bool
        If True the last field is a drift ``V_0`` driven by time.
    bounds : dict
        Free-form metadata such as estimated ``C^k`` norms.
    """

    e: int
    d: int
    V: Callable
    jac: Callable
    hess: Callable
    third: Callable | None = None
    drift: bool = False
    bounds: dict = field(default_factory=dict)
    name: str = "custom"

    @property
    def n_driven(self) -> int:
        """Number of fields driven by the rough path (excluding a drift)."""
        return self.d - 1 if self.drift else self.d

    def check_derivatives(self, rng=None, points: int = 5, eps: float = 1e-6) -> float:
        """Largest relative mismatch between supplied and finite-difference derivatives."""
        rng = np.random.default_rng(0) if rng is None else rng
        worst = 0.0
        pairs = [(self.V, self.jac), (self.jac, self.hess)]
        if self.third is not None:
            pairs.append((self.hess, self.third))
        for _ in range(points):
            y = rng.normal(size=self.e)
            for f, df in pairs:
                exact = df(y)
                for b in range(self.e):
                    step = np.zeros(self.e)
                    step[b] = eps
                    fd = (f(y + step) - f(y - step)) / (2 * eps)
                    got = np.take(exact, b, axis=exact.ndim - 2)
                    scale = max(1.0, float(np.max(np.abs(got))))
                    worst = max(worst, float(np.max(np.abs(fd - got))) / scale)
        return worst


def affine_fields(A, b=None, drift=None) -> VectorFieldSet:
    """Fields ``V_i(y) = A_i y + b_i``.

    Parameters
    ----------
    A : array_like of shape ``(d, e, e)``
    b : array_like of shape ``(d, e)``, optional
    drift : tuple ``(A0, b0)``, optional
        Affine drift appended as the last field.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 2:
        A = A[None]
    d, e, _ = A.shape
    b = np.zeros((d, e)) if b is None else np.asarray(b, dtype=float).reshape(d, e)
    has_drift = drift is not None
    if has_drift:
        A0, b0 = drift
        A = np.concatenate([A, np.asarray(A0, dtype=float).reshape(1, e, e)])
        b = np.concatenate([b, np.asarray(b0, dtype=float).reshape(1, e)])
        d += 1
    J = np.transpose(A, (1, 2, 0)).copy()

    def V(y):
        return (A @ y + b).T

    return VectorFieldSet(
        e=e, d=d, V=V,
        jac=lambda y: J,
        hess=lambda y: np.zeros((e, e, e, d)),
        third=lambda y: np.zeros((e, e, e, e, d)),
        drift=has_drift,
        bounds={"C1": float(np.max(np.abs(A))) if A.size else 0.0},
        name="affine",
    )


def tanh_fields(A, b=None) -> VectorFieldSet:
    """Bounded smooth fields ``V^a_i(y) = tanh((A_i y + b_i)^a)``.

    All derivatives are bounded, so the fields satisfy the ``C^infty_b``
    hypothesis of the integrability results.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 2:
        A = A[None]
    d, e, _ = A.shape
    b = np.zeros((d, e)) if b is None else np.asarray(b, dtype=float).reshape(d, e)

    def z(y):
        return (A @ y + b).T  # (e, d)

    def V(y):
        return np.tanh(z(y))

    def jac(y):
        s = 1.0 / np.cosh(z(y)) ** 2
        return np.einsum("ai,iab->abi", s, A)

    def hess(y):
        t = np.tanh(z(y))
        s = 1.0 / np.cosh(z(y)) ** 2
        return np.einsum("ai,iab,iac->abci", -2.0 * t * s, A, A)

    def third(y):
        t = np.tanh(z(y))
        s = 1.0 / np.cosh(z(y)) ** 2
        c = -2.0 * s * s + 4.0 * t * t * s
        return np.einsum("ai,iab,iac,iaf->abcfi", c, A, A, A)

    return VectorFieldSet(e=e, d=d, V=V, jac=jac, hess=hess, third=third, bounds={"sup": 1.0}, name="tanh")


def zero_fields(e: int, d: int) -> VectorFieldSet:
    """``V = 0``; every solution is constant."""
    return affine_fields(np.zeros((d, e, e)))


@dataclass
class SolutionPath:
    """Solution of an RDE on the driver grid.

    ``Y`` has shape ``(K, e)``; ``J`` (if computed) ``(K, e, e)``; ``DY``
    ``(K, e, H)`` and ``D2Y`` ``(K, e, H, H)`` where ``H = d * M`` indexes the
    truncated Cameron-Martin space (block ``i`` belongs to driver ``i``).
    """

    grid: np.ndarray
    Y: np.ndarray
    J: np.ndarray | None = None
    DY: np.ndarray | None = None
    D2Y: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def pair(self, h, k: int = 1) -> np.ndarray:
        """``<D^k Y_t, h^{(x)k}>`` for ``h`` of shape ``(d, M)`` or ``(H,)``."""
        h = np.asarray(h, dtype=float).ravel()
        if k == 1:
            if self.DY is None:
                raise ValueError("first Malliavin derivative was not computed")
            return self.DY @ h
        if k == 2:
            if self.D2Y is None:
                raise ValueError("second Malliavin derivative was not computed")
            return np.einsum("tabc,b,c->ta", self.D2Y, h, h)
        raise ValueError("k must be 1 or 2")

    def to_csv(self, path) -> None:
        e = self.Y.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["node", "t"] + [f"y{a}" for a in range(e)]
            if self.J is not None:
                head += [f"j{a}{b}" for a in range(e) for b in range(e)]
            w.writerow(head)
            for k in range(self.grid.size):
                row = [k, repr(float(self.grid[k]))] + [repr(float(v)) for v in self.Y[k]]
                if self.J is not None:
                    row += [repr(float(v)) for v in self.J[k].ravel()]
                w.writerow(row)


# ----------------------------------------------------------------- drivers
def _segments(x: Level2Path, substeps: int):
    """Yield ``(segment index, Delta, XX)`` for every (sub-)segment."""
    d = x.segment_increments()
    seg2 = x.segment_level2()
    m = int(substeps)
    for k in range(d.shape[0]):
        if m == 1:
            yield k, d[k], seg2[k]
        else:
            dd = d[k] / m
            excess = seg2[k] - 0.5 * np.outer(d[k], d[k])
            area = 0.5 * np.outer(dd, dd) + excess / m
            for _ in range(m):
                yield k, dd, area


def _with_time(x: Level2Path) -> Level2Path:
    t = x.grid[:, None] - x.grid[0]
    X = np.concatenate([x.level1, t], axis=1)
    if x.is_linear:
        return Level2Path(x.grid, X)
    d = x.segment_increments()
    dt = np.diff(x.grid)[:, None]
    full = np.concatenate([d, dt], axis=1)
    l2 = 0.5 * full[:, :, None] * full[:, None, :]
    l2[:, :-1, :-1] = x.segment_level2()
    return Level2Path(x.grid, X, l2)


def _check_driver(x: Level2Path, V: VectorFieldSet) -> Level2Path:
    if V.drift:
        x = _with_time(x)
    if x.dim != V.d:
        raise ValueError(f"driver has {x.dim} components, fields expect {V.d - V.drift} (+drift)")
    return x


def _G(Vy, Jy):
    """``G[a, i, j] = (DV_j V_i)^a``."""
    return np.einsum("abj,bi->aij", Jy, Vy)


def _finite(y, k):
    if not np.all(np.isfinite(y)):
        raise FloatingPointError(f"non-finite state on interval {k}")


# ------------------------------------------------------------------- solve
def solve(x: Level2Path, V: VectorFieldSet, y0, substeps: int = 1, with_jacobian: bool = False) -> SolutionPath:
    """Solve ``dY = V(Y) dX`` with the second-order Davie scheme.

    Parameters
    ----------
    x : Level2Path
        Geometric driver.
    V : VectorFieldSet
    y0 : array_like of shape ``(e,)``
    substeps : int
        Each grid segment is split into this many equal pieces.
    with_jacobian : bool
        Also propagate ``J = dY_t / dy_0``.
    """
    x = _check_driver(x, V)
    y = np.array(y0, dtype=float).reshape(V.e)
    K = x.n_nodes
    Y = np.empty((K, V.e))
    Y[0] = y
    J = None
    if with_jacobian:
        J = np.empty((K, V.e, V.e))
        J[0] = np.eye(V.e)
        jm = np.eye(V.e)
        dets = np.ones(K)
    last = 0
    for k, dX, XX in _segments(x, substeps):
        if k != last:
            Y[last + 1] = y
            if J is not None:
                J[last + 1] = jm
            last = k
        Vy, Jy = V.V(y), V.jac(y)
        G = _G(Vy, Jy)
        y_new = y + Vy @ dX + np.einsum("aij,ij->a", G, XX)
        if J is not None:
            Hy = V.hess(y)
            DVJ = np.einsum("abj,bc->acj", Jy, jm)
            lin = np.einsum("acj,j->ac", DVJ, dX)
            # D(DV_j V_i)[J] = D^2V_j[V_i, J] + DV_j DV_i J
            second = np.einsum("abdj,bi,dc->acij", Hy, Vy, jm) + np.einsum("abj,bdi,dc->acij", Jy, Jy, jm)
            jm = jm + lin + np.einsum("acij,ij->ac", second, XX)
        y = y_new
        _finite(y, k)
    Y[-1] = y
    if J is not None:
        J[-1] = jm
        dets = np.linalg.det(J)
        small = np.nonzero(np.abs(dets) < 1e-300)[0]
        if small.size:
            warnings.warn(f"Jacobian determinant underflow at node {small[0]}", RuntimeWarning, stacklevel=2)
    meta = {"scheme": "davie", "order": 2, "substeps": int(substeps), "segments": K - 1}
    return SolutionPath(grid=x.grid, Y=Y, J=J, meta=meta)


def jacobian(x: Level2Path, V: VectorFieldSet, y0, substeps: int = 1) -> SolutionPath:
    """Solution together with its Jacobian ``J^Y_t`` with respect to ``y0``."""
    return solve(x, V, y0, substeps=substeps, with_jacobian=True)


# ------------------------------------------------------- Malliavin layers
def _enhanced_driver(xhat: EnhancedSample, V: VectorFieldSet, k: int):
    """Node arrays ``X (K, d)``, ``DX (K, d, H)`` and optionally ``D2X (K, d, H, H)``."""
    if xhat.max_order < min(k, xhat.order):
        raise ValueError(f"enhanced sample lacks derivative order {min(k, xhat.order)}; re-enhance with max_order >= {k}")
    K, d, M = xhat.grid.size, xhat.d, xhat.M
    H = d * M
    X = xhat.values
    DX = np.zeros((K, d, H))
    for j in range(d):
        if xhat.max_order >= 1:
            DX[:, j, j * M:(j + 1) * M] = xhat.layers[1][:, j]
    D2X = None
    if k >= 2:
        D2X = np.zeros((K, d, H, H))
        if xhat.max_order >= 2:
            for j in range(d):
                blk = slice(j * M, (j + 1) * M)
                D2X[:, j, blk, blk] = xhat.layers[2][:, j].reshape(K, M, M)
    if V.drift:
        X = np.concatenate([X, (xhat.grid - xhat.grid[0])[:, None]], axis=1)
        DX = np.concatenate([DX, np.zeros((K, 1, H))], axis=1)
        if D2X is not None:
            D2X = np.concatenate([D2X, np.zeros((K, 1, H, H))], axis=1)
    if X.shape[1] != V.d:
        raise ValueError(f"driver has {X.shape[1]} components, fields expect {V.d}")
    return X, DX, D2X


def malliavin_rde(xhat: EnhancedSample, V: VectorFieldSet, y0, k: int = 1, substeps: int = 1) -> SolutionPath:
    """Solve for ``Y`` together with ``DY`` (and ``D^2 Y`` when ``k = 2``).

    The enhanced driver is interpolated linearly between nodes.  On each
    (sub-)segment the Davie map ``Phi(Y, Delta) = Y + V_i Delta^i +
    1/2 (DV_j V_i) Delta^i Delta^j`` is differentiated along the Malliavin
    directions:

    * ``DY <- Phi_Y DY + Phi_{Delta^i} (x) D Delta^i``
    * ``D^2Y <- Phi_Y D^2Y + Phi_YY[DY, DY] + 2 Sym(Phi_{Y Delta^i}[DY] (x) D Delta^i)
      + Phi_{Delta^i Delta^j} D Delta^i (x) D Delta^j + Phi_{Delta^i} D^2 Delta^i``

    which is the second-order discretisation of the linear equations for
    ``DY`` (forced by ``V(Y) dDX``) and ``D^2 Y`` (forced by the Faà di Bruno
    terms in ``DY`` and the ``D^r X`` blocks).
    """
    if k not in (1, 2):
        raise ValueError("only k = 1 or k = 2 is supported")
    if k == 2 and V.third is None:
        raise ValueError("k = 2 needs third derivatives of the vector fields")
    X, DX, D2X = _enhanced_driver(xhat, V, k)
    K, d, H = DX.shape
    e = V.e
    m = int(substeps)
    y = np.array(y0, dtype=float).reshape(e)
    Y = np.empty((K, e))
    DYs = np.empty((K, e, H))
    D2Ys = np.empty((K, e, H, H)) if k == 2 else None
    Y[0] = y
    dy = np.zeros((e, H))
    DYs[0] = dy
    d2y = None
    if k == 2:
        d2y = np.zeros((e, H, H))
        D2Ys[0] = d2y
    eye = np.eye(e)
    for seg in range(K - 1):
        dX = (X[seg + 1] - X[seg]) / m
        dDX = (DX[seg + 1] - DX[seg]) / m
        dD2X = None if D2X is None else (D2X[seg + 1] - D2X[seg]) / m
        for _ in range(m):
            Vy, Jy, Hy = V.V(y), V.jac(y), V.hess(y)
            G = _G(Vy, Jy)
            # DG[a, b, i, j] = d/dy^b (DV_j V_i)^a
            DG = np.einsum("acbj,ci->abij", Hy, Vy) + np.einsum("acj,cbi->abij", Jy, Jy)
            half_outer = 0.5 * np.outer(dX, dX)
            phi_y = eye + np.einsum("abi,i->ab", Jy, dX) + np.einsum("abij,ij->ab", DG, half_outer)
            Gs = 0.5 * (G + G.transpose(0, 2, 1))  # Phi_{Delta^i Delta^j}
            phi_d = Vy + np.einsum("aij,j->ai", Gs, dX)  # (e, d)
            new_dy = phi_y @ dy + phi_d @ dDX
            if k == 2:
                T3 = V.third(y)
                # second derivative of (DV_j V_i) in y
                D2G = (
                    np.einsum("acbfj,ci->abfij", T3, Vy)
                    + np.einsum("acbj,cfi->abfij", Hy, Jy)
                    + np.einsum("acfj,cbi->abfij", Hy, Jy)
                    + np.einsum("acj,cbfi->abfij", Jy, Hy)
                )
                phi_yy = np.einsum("abfi,i->abf", Hy, dX) + np.einsum("abfij,ij->abf", D2G, half_outer)
                DGs = 0.5 * (DG + DG.transpose(0, 1, 3, 2))
                phi_yd = Jy + np.einsum("abij,j->abi", DGs, dX)  # (e, e, d)
                cross = np.einsum("abi,bu,iv->auv", phi_yd, dy, dDX)
                new_d2y = (
                    np.einsum("ab,buv->auv", phi_y, d2y)
                    + np.einsum("abf,bu,fv->auv", phi_yy, dy, dy)
                    + cross + cross.transpose(0, 2, 1)
                    + np.einsum("aij,iu,jv->auv", Gs, dDX, dDX)
                    + np.einsum("ai,iuv->auv", phi_d, dD2X)
                )
                d2y = new_d2y
            y = y + Vy @ dX + np.einsum("aij,ij->a", G, half_outer)
            dy = new_dy
            _finite(y, seg)
        Y[seg + 1] = y
        DYs[seg + 1] = dy
        if k == 2:
            D2Ys[seg + 1] = d2y
    meta = {"scheme": "davie-malliavin", "k": k, "substeps": m}
    return SolutionPath(grid=xhat.grid, Y=Y, DY=DYs, D2Y=D2Ys, meta=meta)


# ------------------------------------------------------- Faà di Bruno terms
def set_partitions(items):
    """All set partitions of ``items`` (as lists of tuples)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [(first,) + part[i]] + part[i + 1:]
        yield [(first,)] + part


def dky_terms(k: int) -> list[dict]:
    """Symbolic forcing terms of the linear equation for ``D^k Y``.

    Differentiating ``V_i(Y) dX^i`` ``k`` times with the Leibniz rule splits the
    ``k`` derivative slots into ``r`` slots acting on ``X`` (weight ``C(k, r)``)
    and ``k - r`` slots acting on ``V_i(Y)``, which Faà di Bruno expands over
    set partitions of those slots.  Each returned term records ``r``, the
    binomial weight, the partition block sizes and the derivative order of
    ``V`` it involves.  The term with ``r = 0`` and a single block is the
    linear part ``DV(Y) D^k Y dX``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = []
    for r in range(k + 1):
        slots = list(range(k - r))
        parts = list(set_partitions(slots)) if slots else [[]]
        for part in parts:
            terms.append({
                "r": r,
                "weight": math.comb(k, r),
                "blocks": sorted(len(b) for b in part),
                "v_order": len(part),
                "linear": r == 0 and len(part) == 1,
            })
    return terms


# ------------------------------------------------------------ moment scans
def moment_scan(quantity: str, p_list, samples: int, seed: int, kernel: KernelPath, V: VectorFieldSet, y0, d: int | None = None, substeps: int = 1, rel_tol: float = 0.1) -> dict:
    """Empirical moments of ``sup_t |J_t|`` or ``sup_t ||DY_t||`` with a doubling check.

    For each ``p`` the moment on all samples is compared with the one on the
    first half; the estimate is called stable when they agree within three
    standard errors or ``rel_tol`` relative difference.
    """
    if quantity not in ("jacobian", "malliavin"):
        raise ValueError("quantity must be 'jacobian' or 'malliavin'")
    if samples < 1000:
        raise ValueError("moment_scan needs at least 10^3 samples")
    d = V.n_driven if d is None else d
    vals = np.empty(samples)
    for s in range(samples):
        xhat = enhance(kernel, draw_xi(d, kernel.dim, seed, s), max_order=1)
        if quantity == "jacobian":
            sol = jacobian(Level2Path(xhat.grid, xhat.values), V, y0, substeps=substeps)
            vals[s] = np.max(np.linalg.norm(sol.J.reshape(sol.J.shape[0], -1), axis=1))
        else:
            sol = malliavin_rde(xhat, V, y0, k=1, substeps=substeps)
            vals[s] = np.max(np.linalg.norm(sol.DY.reshape(sol.DY.shape[0], -1), axis=1))
    rows = []
    half = samples // 2
    for p in p_list:
        q = np.abs(vals) ** p
        m_full, m_half = q.mean(), q[:half].mean()
        se = q.std(ddof=1) / math.sqrt(samples)
        stable = bool(abs(m_full - m_half) <= max(3 * se, rel_tol * abs(m_full)))
        rows.append({"p": float(p), "moment": float(m_full), "se": float(se), "half_moment": float(m_half), "stable": stable})
    largest = None
    for row in rows:
        if not row["stable"]:
            break
        largest = row["p"]
    return {"quantity": quantity, "samples": samples, "rows": rows, "largest_stable_p": largest}
