"""Greedy partitions, tail estimates, rate functions and scaling diagnostics.

The homogeneous p-variation used throughout is the one of
:func:`chaosrough.roughlift.p_variation`: ``||X||^p = sup sum |X_{s,t}|^p +
sup sum ||XX_{s,t}||^{p/2}`` over partitions whose points are grid nodes.  The
greedy search also places partition points inside grid segments; these are
handled by refining the path (linear level 1, level-2 excess shared in
proportion to length) so that every reported quantity refers to the same
refined grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from ._rng import gaussian_block
from ._variation import all_interval_partition_sums, max_partition_sum
from .kernels import KernelPath
from .roughlift import Level2Path, lift_piecewise_linear

__all__ = [
    "PartitionStats",
    "RateResult",
    "greedy",
    "greedy_count",
    "accumulated_variation",
    "tail_scan",
    "rate_function",
    "kernel_pairing",
    "scaling_check",
]

GREEDY_TOL = 1e-9


# ------------------------------------------------------------ numba kernels
@njit(cache=True)
def _fro(a):
    s = 0.0
    for v in a.ravel():
        s += v * v
    return math.sqrt(s)


@njit(cache=True)
def _cost_matrices(X, A, p):
    K, D = X.shape
    c1 = np.zeros((K, K))
    c2 = np.zeros((K, K))
    m = np.empty((D, D))
    for i in range(K - 1):
        for j in range(i + 1, K):
            s = 0.0
            for a in range(D):
                da = X[j, a] - X[i, a]
                s += da * da
                for b in range(D):
                    m[a, b] = A[j, a, b] - A[i, a, b] - (X[i, a] - X[0, a]) * (X[j, b] - X[i, b])
            c1[i, j] = s ** (0.5 * p)
            c2[i, j] = _fro(m) ** (0.5 * p)
    return c1, c2


@njit(cache=True)
def _piece(delta, excess, lam):
    """Level 1 and level 2 of a fraction ``lam`` of one linear-with-excess segment."""
    D = delta.shape[0]
    d = lam * delta
    out = np.empty((D, D))
    for a in range(D):
        for b in range(D):
            out[a, b] = 0.5 * d[a] * d[b] + lam * excess[a, b]
    return d, out


@njit(cache=True)
def _window_value(X, A, delta, excess, c1, c2, s, lam_tau, x_tau, row1, row2, rowL2, best1, best2, g, mu, p, use2):
    """``||X||^p`` on ``[tau, t]`` with ``t`` at fraction ``mu`` of segment ``g``."""
    D = X.shape[1]
    if g == s:
        d, l2 = _piece(delta[s], excess[s], mu - lam_tau)
        v1 = 0.0
        for a in range(D):
            v1 += d[a] * d[a]
        v1 = v1 ** (0.5 * p)
        v2 = _fro(l2) ** (0.5 * p) if use2 else 0.0
        return v1 + v2
    dg, pg = _piece(delta[g], excess[g], mu)
    xt = X[g] + dg
    # last piece starting at tau
    inc = xt - x_tau
    l2 = rowL2[g] + pg
    for a in range(D):
        for b in range(D):
            l2[a, b] += (X[g, a] - x_tau[a]) * dg[b]
    b1 = _fro(inc) ** p
    b2 = _fro(l2) ** (0.5 * p) if use2 else 0.0
    m = np.empty((D, D))
    for c in range(s + 1, g + 1):
        inc = xt - X[c]
        v1 = best1[c] + _fro(inc) ** p
        if v1 > b1:
            b1 = v1
        if use2:
            for a in range(D):
                for b in range(D):
                    m[a, b] = (A[g, a, b] - A[c, a, b] - (X[c, a] - X[0, a]) * (X[g, b] - X[c, b])
                               + pg[a, b] + (X[g, a] - X[c, a]) * dg[b])
            v2 = best2[c] + _fro(m) ** (0.5 * p)
            if v2 > b2:
                b2 = v2
    return b1 + (b2 if use2 else 0.0)


@njit(cache=True)
def _greedy(grid, X, A, delta, excess, c1, c2, alpha, p, use2, tol, cap):
    K, D = X.shape
    taus = np.empty(cap)
    segs = np.empty(cap, dtype=np.int64)
    lams = np.empty(cap)
    count = 0
    s = 0
    lam_tau = 0.0
    row1 = np.zeros(K)
    row2 = np.zeros(K)
    rowL2 = np.zeros((K, D, D))
    best1 = np.zeros(K)
    best2 = np.zeros(K)
    w = np.zeros(K)
    while True:
        if count >= cap - 1:
            raise RuntimeError("greedy sequence exceeded its a priori length bound")
        d0, p0 = _piece(delta[s], excess[s], 1.0 - lam_tau)
        x_tau = X[s + 1] - d0
        # costs and level-2 increments from tau to every later grid node
        for j in range(s + 1, K):
            if j == s + 1:
                for a in range(D):
                    for b in range(D):
                        rowL2[j, a, b] = p0[a, b]
            else:
                for a in range(D):
                    for b in range(D):
                        rowL2[j, a, b] = (p0[a, b] + A[j, a, b] - A[s + 1, a, b]
                                          - (X[s + 1, a] - X[0, a]) * (X[j, b] - X[s + 1, b])
                                          + d0[a] * (X[j, b] - X[s + 1, b]))
            row1[j] = _fro(X[j] - x_tau) ** p
            row2[j] = _fro(rowL2[j]) ** (0.5 * p)
        for j in range(s + 1, K):
            b1 = row1[j]
            b2 = row2[j]
            for c in range(s + 1, j):
                v = best1[c] + c1[c, j]
                if v > b1:
                    b1 = v
                v = best2[c] + c2[c, j]
                if v > b2:
                    b2 = v
            best1[j] = b1
            best2[j] = b2
            w[j] = b1 + (b2 if use2 else 0.0)
        if w[K - 1] <= alpha * (1.0 + tol):
            taus[count] = grid[K - 1]
            segs[count] = K - 2
            lams[count] = 1.0
            count += 1
            break
        j = s + 1
        while w[j] < alpha * (1.0 - tol):
            j += 1
        if w[j] <= alpha * (1.0 + tol):
            taus[count] = grid[j]
            segs[count] = j
            lams[count] = 0.0
            count += 1
            if j == K - 1:
                break
            s = j
            lam_tau = 0.0
            continue
        g = j - 1
        lo = lam_tau if g == s else 0.0
        hi = 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            v = _window_value(X, A, delta, excess, c1, c2, s, lam_tau, x_tau, row1, row2, rowL2, best1, best2, g, mid, p, use2)
            if v >= alpha:
                hi = mid
            else:
                lo = mid
        if hi >= 1.0:
            taus[count] = grid[g + 1]
            segs[count] = g + 1
            lams[count] = 0.0
            count += 1
            if g + 1 == K - 1:
                break
            s = g + 1
            lam_tau = 0.0
        else:
            taus[count] = grid[g] + hi * (grid[g + 1] - grid[g])
            segs[count] = g
            lams[count] = hi
            count += 1
            s = g
            lam_tau = hi
    return taus[:count], segs[:count], lams[:count]


@njit(cache=True)
def _accumulated(W, limit):
    K = W.shape[0]
    best = np.full(K, -1.0)
    best[0] = 0.0
    for j in range(1, K):
        m = -1.0
        for i in range(j):
            if best[i] >= 0.0 and W[i, j] <= limit:
                v = best[i] + W[i, j]
                if v > m:
                    m = v
        best[j] = m
    return best[K - 1]


# ---------------------------------------------------------------- greedy
@dataclass
class PartitionStats:
    """Greedy sequence and associated functionals of one path.

    Attributes
    ----------
    alpha, p : float
    taus : ndarray
        ``tau_1, tau_2, ...`` (``tau_0 = t_0`` omitted); the last entry is the
        right end point.
    N : int
        Number of greedy times strictly before the right end point.
    M_accumulated : float
        Best admissible partition sum found on the refined grid (a lower
        bound for the accumulated local variation).
    M_greedy : float
        Sum over the greedy partition itself.
    M_upper : float
        Certificate ``alpha (2N + 1)``.
    homogeneous_norm_p : float
        ``||X||^p`` on the refined grid.
    """

    alpha: float
    taus: np.ndarray
    N: int
    M_accumulated: float
    M_greedy: float
    M_upper: float
    homogeneous_norm_p: float
    p: float
    window_values: np.ndarray = field(repr=False, default=None)

    def check(self, rtol: float = 1e-9) -> dict:
        """Booleans for ``alpha N <= ||X||^p`` and ``M <= alpha (2N + 1)``."""
        scale = max(self.homogeneous_norm_p, self.alpha)
        return {
            "count_bound": bool(self.alpha * self.N <= self.homogeneous_norm_p + rtol * scale),
            "accumulated_bound": bool(self.M_accumulated <= self.M_upper + rtol * scale),
        }

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "p": self.p,
            "taus": [float(t) for t in self.taus],
            "N": self.N,
            "M_accumulated": self.M_accumulated,
            "M_interval": [self.M_accumulated, self.M_upper],
            "M_greedy": self.M_greedy,
            "homogeneous_norm_p": self.homogeneous_norm_p,
        }


def _prepare(x: Level2Path, p: float):
    X = np.ascontiguousarray(x.level1, dtype=float)
    A = np.ascontiguousarray(x.cumulative_level2())
    delta = np.ascontiguousarray(x.segment_increments())
    excess = np.ascontiguousarray(x.segment_level2() - 0.5 * delta[:, :, None] * delta[:, None, :])
    c1, c2 = _cost_matrices(X, A, float(p))
    return X, A, delta, excess, c1, c2


def _check_args(alpha, p):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")


def _run_greedy(grid, X, A, delta, excess, c1, c2, alpha, p, level2):
    # alpha N <= ||X||^p bounds the number of greedy times
    total = max_partition_sum(c1) + (max_partition_sum(c2) if level2 else 0.0)
    cap = int(total / (alpha * (1.0 - GREEDY_TOL))) + 4
    taus, _, _ = _greedy(grid, X, A, delta, excess, c1, c2, float(alpha), float(p), bool(level2), GREEDY_TOL, cap)
    return taus


def greedy_count(x: Level2Path, alpha: float, p: float, level2: bool = True) -> tuple[int, np.ndarray]:
    """Greedy times and ``N_alpha`` without the accumulated-variation search."""
    _check_args(alpha, p)
    X, A, delta, excess, c1, c2 = _prepare(x, p)
    taus = _run_greedy(x.grid, X, A, delta, excess, c1, c2, alpha, p, level2)
    return int(np.sum(taus < x.grid[-1])), taus


def _interval_norms(y: Level2Path, p: float, level2: bool) -> np.ndarray:
    X, A, _, _, c1, c2 = _prepare(y, p)
    W = all_interval_partition_sums(c1)
    if level2:
        W = W + all_interval_partition_sums(c2)
    return W


def accumulated_variation(x: Level2Path, alpha: float, p: float, level2: bool = True) -> float:
    """Best sum of ``||X||^p_{[t_i, t_{i+1}]}`` over grid partitions with pieces ``<= alpha``."""
    _check_args(alpha, p)
    W = _interval_norms(x, p, level2)
    return float(_accumulated(W, alpha * (1.0 + GREEDY_TOL)))


def greedy(x: Level2Path, alpha: float, p: float, level2: bool = True) -> PartitionStats:
    """Greedy sequence ``tau_i``, ``N_alpha`` and accumulated local variation.

    Each ``tau_{i+1}`` is the first time at which ``||X||^p_{[tau_i, t]}``
    reaches ``alpha``: the crossing grid segment is located from the
    window norms at grid nodes and the crossing point is then bisected inside
    that segment.  Values within a relative ``1e-9`` of ``alpha`` count as
    hitting it.

    Parameters
    ----------
    x : Level2Path
    alpha : float
        Threshold, ``> 0``.
    p : float
        Variation exponent, ``>= 1``.
    level2 : bool
        If False only the level-1 part ``sup sum |X_{s,t}|^p`` is used.
    """
    N, taus = greedy_count(x, alpha, p, level2)
    y = x.refine(taus)
    W = _interval_norms(y, p, level2)
    idx = np.concatenate([[0], np.searchsorted(y.grid, taus)])
    idx = np.minimum(idx, y.n_nodes - 1)
    windows = np.array([W[a, b] for a, b in zip(idx[:-1], idx[1:])])
    M = float(_accumulated(W, alpha * (1.0 + GREEDY_TOL)))
    return PartitionStats(
        alpha=float(alpha),
        taus=taus,
        N=N,
        M_accumulated=M,
        M_greedy=float(np.sum(windows)),
        M_upper=float(alpha * (2 * N + 1)),
        homogeneous_norm_p=float(W[0, -1]),
        p=float(p),
        window_values=windows,
    )


# ------------------------------------------------------------------ tails
def _order_of(k: KernelPath) -> int:
    return int(k.order)


def tail_scan(k: KernelPath, alpha: float, p: float, M_list=None, samples: int = 10**4, seed: int = 0, d: int = 1, min_exceed: int = 20, batch: int = 1024, invariants: bool = False) -> dict:
    """Empirical survival ``P(N_alpha > M)`` of the greedy count.

    The log-survival is regressed on ``M^{2/(np)}`` using only bins with at
    least ``min_exceed`` exceedances.  The fit is qualitative: the constants
    of the theoretical tail bound are not computable.  By default ``M`` runs
    from the sample median of ``N_alpha`` upwards, so that the fit sees the
    tail rather than the bulk of the distribution.

    Returns
    -------
    dict
        ``M``, ``survival``, ``exceed``, ``wilson_low``, ``wilson_high``,
        ``slope``, ``intercept``, ``r2``, ``fit_points``, ``monotone``,
        ``degenerate``, ``kappa_estimate`` (median of ``||X||^p``), ``counts``.
        With ``invariants=True`` the full :func:`greedy` statistics are
        computed per sample and ``count_bound_violations`` and
        ``accumulated_bound_violations`` are added.
    """
    _check_args(alpha, p)
    if samples < 1:
        raise ValueError("samples must be positive")
    n = _order_of(k)
    counts = np.empty(samples, dtype=np.int64)
    norms = np.empty(samples)
    viol = np.zeros(2, dtype=np.int64)
    for start in range(0, samples, batch):
        m = min(batch, samples - start)
        xi = gaussian_block(seed, start, m, d * k.dim).reshape(m, d, k.dim)
        paths = np.moveaxis(k.evaluate(xi), 1, 2)
        for s in range(m):
            x = lift_piecewise_linear(paths[s], k.grid)
            if invariants:
                st_ = greedy(x, alpha, p)
                chk = st_.check()
                viol += [not chk["count_bound"], not chk["accumulated_bound"]]
                counts[start + s] = st_.N
                norms[start + s] = st_.homogeneous_norm_p
                continue
            X, A, delta, excess, c1, c2 = _prepare(x, p)
            taus = _run_greedy(x.grid, X, A, delta, excess, c1, c2, alpha, p, True)
            counts[start + s] = int(np.sum(taus < x.grid[-1]))
            norms[start + s] = _norm_from_costs(c1, c2)
    if M_list is None:
        M_list = range(int(np.median(counts)), int(counts.max()) + 1)
    M_list = np.asarray(sorted(M_list), dtype=float)
    exceed = np.array([int(np.sum(counts > M)) for M in M_list])
    surv = exceed / samples
    lo, hi = [], []
    for e in exceed:
        ci = stats.binomtest(int(e), samples).proportion_ci(method="wilson")
        lo.append(ci.low)
        hi.append(ci.high)
    use = exceed >= min_exceed
    xs = M_list[use] ** (2.0 / (n * p))
    report = {
        "M": M_list.tolist(),
        "survival": surv.tolist(),
        "exceed": exceed.tolist(),
        "wilson_low": [float(v) for v in lo],
        "wilson_high": [float(v) for v in hi],
        "monotone": bool(np.all(np.diff(surv) <= 0)),
        "exponent": 2.0 / (n * p),
        "fit_points": int(use.sum()),
        "kappa_estimate": float(np.median(norms)),
        "samples": samples,
        "counts": counts,
        "qualitative": True,
    }
    if invariants:
        report["count_bound_violations"] = int(viol[0])
        report["accumulated_bound_violations"] = int(viol[1])
    if use.sum() < 3 or np.ptp(xs) == 0:
        report.update(slope=float("nan"), intercept=float("nan"), r2=float("nan"), degenerate=True)
        return report
    fit = stats.linregress(xs, np.log(surv[use]))
    report.update(slope=float(fit.slope), intercept=float(fit.intercept), r2=float(fit.rvalue ** 2), degenerate=False)
    return report


def _norm_from_costs(c1, c2) -> float:
    return max_partition_sum(c1) + max_partition_sum(c2)


# ---------------------------------------------------------- rate function
@dataclass
class RateResult:
    """Outcome of the rate-function minimisation for one target path.

    ``h_star`` has shape ``(d, dim)`` (one Cameron-Martin element per
    component); ``value`` is ``1/2 ||h_star||^2`` recomputed from ``h_star``.
    ``status`` is ``"feasible"`` or ``"infeasible"`` (no feasible point found;
    ``residual`` is then the smallest violation over all restarts).
    """

    target: np.ndarray
    h_star: np.ndarray
    value: float
    residual: float
    status: str
    residual_history: list = field(default_factory=list)
    values: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "residual": self.residual,
            "status": self.status,
            "h_star": self.h_star.tolist(),
            "residual_history": self.residual_history,
        }


class _Pairing:
    """``h -> (<f_{t_j}, h^{(x)n}>)_j`` with its Jacobian."""

    def __init__(self, k: KernelPath):
        self.n = k.order
        self.dim = k.dim
        if k.is_factored:
            self.factors = [np.asarray(g) for g in k.factors]
            self.terms = None
        else:
            self.factors = None
            self.terms = []
            for t in k.kernels:
                items = list(t.coeffs.items())
                if items:
                    idx = np.array([i for i, _ in items], dtype=np.int64).reshape(len(items), self.n)
                    c = np.array([c for _, c in items])
                else:
                    idx = np.zeros((0, self.n), dtype=np.int64)
                    c = np.zeros(0)
                self.terms.append((idx, c))

    def value_and_jacobian(self, h: np.ndarray):
        if self.factors is not None:
            lin = np.stack([g @ h for g in self.factors])  # (n, K)
            val = np.prod(lin, axis=0)
            jac = np.zeros((lin.shape[1], self.dim))
            for i, g in enumerate(self.factors):
                others = np.prod(np.delete(lin, i, axis=0), axis=0) if self.n > 1 else np.ones(lin.shape[1])
                jac += others[:, None] * g
            return val, jac
        val = np.zeros(len(self.terms))
        jac = np.zeros((len(self.terms), self.dim))
        for r, (idx, c) in enumerate(self.terms):
            if c.size == 0:
                continue
            hv = h[idx]  # (terms, n)
            val[r] = np.sum(c * np.prod(hv, axis=1))
            for j in range(self.n):
                others = np.prod(np.delete(hv, j, axis=1), axis=1) if self.n > 1 else np.ones(c.size)
                np.add.at(jac[r], idx[:, j], c * others)
        return val, jac


def kernel_pairing(k: KernelPath, h) -> np.ndarray:
    """``<f_t, h^{(x)n}>`` at every grid node."""
    return _Pairing(k).value_and_jacobian(np.asarray(h, dtype=float))[0]


def _min_norm_newton(F, x, h, maxiter, tol):
    """Iterate ``h <- J^+ (x - F(h) + J h)``, the minimum-norm solution of the
    linearised constraints, with backtracking on the residual.  Fixed points
    satisfy ``F(h) = x`` and ``h in range(J^T)``, the first-order conditions of
    ``min 1/2 ||h||^2``."""
    val, jac = F(h)
    r = x - val
    norm_r = float(np.max(np.abs(r))) if r.size else 0.0
    hist = [norm_r]
    for _ in range(maxiter):
        if norm_r <= 0.01 * tol and len(hist) > 1 and abs(hist[-2] - norm_r) <= 0.01 * tol:
            break
        target = np.linalg.lstsq(jac, r + jac @ h, rcond=1e-12)[0]
        step = target - h
        t = 1.0
        while True:
            cand = h + t * step
            cv, cj = F(cand)
            cr = x - cv
            cn = float(np.max(np.abs(cr)))
            if cn <= max(norm_r, tol) or t < 1e-6:
                break
            t *= 0.5
        moved = float(np.max(np.abs(cand - h)))
        h, val, jac, r, norm_r = cand, cv, cj, cr, cn
        hist.append(norm_r)
        if moved <= 1e-15 * (1.0 + float(np.max(np.abs(h)))):
            break
        if len(hist) > 25 and hist[-26] - norm_r <= 1e-12 * max(norm_r, tol):
            break
    return h, norm_r, hist


def _solve_component(pairing: _Pairing, x: np.ndarray, starts: int, rng, tol: float, maxiter: int):
    # nodes whose kernel vanishes identically impose ``x = 0`` only
    zero_rows = np.array([not np.any(r) for r in _kernel_rows(pairing, x.size)])
    floor = float(np.max(np.abs(x[zero_rows]))) if zero_rows.any() else 0.0
    active = ~zero_rows
    xa = x[active]

    def F(h):
        v, j = pairing.value_and_jacobian(h)
        return v[active], j[active]

    best = None
    history = []
    for s in range(starts):
        h0 = rng.normal(size=pairing.dim) * (0.5 if s == 0 else 1.0)
        if xa.size:
            h, viol, _ = _min_norm_newton(F, xa, h0, maxiter, tol)
        else:
            h, viol = np.zeros(pairing.dim), 0.0
        viol = max(viol, floor)
        val = 0.5 * float(h @ h)
        history.append((viol, val))
        key = (viol > tol, val if viol <= tol else viol)
        if best is None or key < best[0]:
            best = (key, h, viol, val)
    return best[1], best[2], best[3], history


def _kernel_rows(pairing: _Pairing, K: int):
    if pairing.factors is not None:
        rows = np.ones((K, 1), dtype=bool)
        for g in pairing.factors:
            rows &= np.any(g != 0, axis=1)[:, None]
        return rows
    return [c for _, c in pairing.terms]


def rate_function(k: KernelPath, x, starts: int = 32, seed: int = 0, tol: float = 1e-6, maxiter: int = 200) -> RateResult:
    """Minimise ``1/2 ||h||^2`` subject to ``<f_t, h^{(x)n}> = x_t`` on the grid.

    Each of ``starts`` random initial points is driven to a first-order
    point by minimum-norm Gauss-Newton projections onto the linearised
    constraints (analytic Jacobians); the best feasible value is returned.  For ``n = 1`` the problem is a convex
    quadratic programme and the minimiser is unique.  For ``n >= 2`` it is
    non-convex, so the result is an upper bound and ``"infeasible"`` means
    that no feasible point was found.

    Parameters
    ----------
    k : KernelPath
    x : array_like of shape ``(K,)`` or ``(K, d)``
        Target values at the kernel grid nodes; components are independent.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != k.n_nodes:
        raise ValueError(f"target has {x.shape[0]} nodes, kernel grid has {k.n_nodes}")
    if starts < 1:
        raise ValueError("need at least one start")
    pairing = _Pairing(k)
    rng = np.random.default_rng(seed)
    hs, viols, hist, vals = [], [], [], []
    for c in range(x.shape[1]):
        h, viol, val, h_hist = _solve_component(pairing, x[:, c], starts, rng, tol, maxiter)
        hs.append(h)
        viols.append(viol)
        hist.append([v for v, _ in h_hist])
        vals.append([w for _, w in h_hist])
    h_star = np.array(hs)
    residual = float(max(viols))
    status = "feasible" if residual <= tol else "infeasible"
    return RateResult(
        target=x,
        h_star=h_star,
        value=0.5 * float(np.sum(h_star * h_star)),
        residual=residual,
        status=status,
        residual_history=hist,
        values=vals,
    )


# --------------------------------------------------------------- scaling
def scaling_check(k: KernelPath, eps_list, samples: int = 20, seed: int = 0, p: float = 2.5, d: int = 2, alpha: float = 0.1) -> dict:
    """Homogeneity of the lift under the dilation ``X -> eps^n X``.

    For every sample the path is scaled by ``eps^n`` and the level-1,
    level-2 and homogeneous norms are compared with ``eps^n``, ``eps^{2n}`` and
    ``eps^n`` times the unscaled values.  The exact composition
    ``xi -> eps xi`` is evaluated alongside; for ``n >= 2`` it differs because
    Hermite polynomials are not homogeneous.  The greedy count ``N_alpha``
    of the dilated path is recorded for the monotonicity check.

    Returns
    -------
    dict
        ``rows`` (one per ``eps``) with the maximal relative errors
        ``level1_err``, ``level2_err``, ``norm_err``, ``level2_block_err``,
        the mean ratio ``composition_ratio`` of the composed norm to the
        unscaled one, and ``N_mean``; ``max_err``; ``N_monotone``.
    """
    from .roughlift import p_variation

    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise ValueError("eps must be positive")
    n = k.order
    xi = gaussian_block(seed, 0, samples, d * k.dim).reshape(samples, d, k.dim)
    base_paths = np.moveaxis(k.evaluate(xi), 1, 2)
    base = [lift_piecewise_linear(P, k.grid) for P in base_paths]
    base_var = [p_variation(x, p) for x in base]
    base_A = [x.cumulative_level2() for x in base]
    rows = []
    counts = {}
    for eps in eps_list:
        lam = eps ** n
        composed = np.moveaxis(k.evaluate(eps * xi), 1, 2)
        e1 = e2 = en = eb = 0.0
        ratios, Ns = [], []
        for s, x in enumerate(base):
            y = lift_piecewise_linear(lam * base_paths[s], k.grid)
            v = p_variation(y, p)
            ref = base_var[s]
            e1 = max(e1, _rel(v.level1, lam * ref.level1))
            e2 = max(e2, _rel(v.level2, lam ** 2 * ref.level2))
            en = max(en, _rel(v.norm, lam * ref.norm))
            eb = max(eb, float(np.max(np.abs(y.cumulative_level2() - lam ** 2 * base_A[s]))) / max(float(np.max(np.abs(lam ** 2 * base_A[s]))), 1e-300))
            ratios.append(p_variation(lift_piecewise_linear(composed[s], k.grid), p).norm / ref.norm if ref.norm > 0 else float("nan"))
            Ns.append(greedy_count(y, alpha, p)[0])
        counts[eps] = np.array(Ns)
        rows.append({
            "eps": eps,
            "scale": lam,
            "level1_err": e1,
            "level2_err": e2,
            "norm_err": en,
            "level2_block_err": eb,
            "composition_ratio": float(np.nanmean(ratios)),
            "N_mean": float(np.mean(Ns)),
        })
    order = sorted(eps_list)
    monotone = all(np.all(counts[a] <= counts[b]) for a, b in zip(order, order[1:]))
    return {
        "order": n,
        "p": p,
        "alpha": alpha,
        "rows": rows,
        "max_err": max(max(r["level1_err"], r["level2_err"], r["norm_err"], r["level2_block_err"]) for r in rows),
        "N_monotone": bool(monotone),
    }


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)
