"""Dynamic-programming kernels for 1D p-variation over grid partitions.

All routines take a matrix ``cost[i, j]`` (only ``i < j`` is read) giving the
contribution of the piece ``[t_i, t_j]`` and maximise the sum of piece costs
over partitions whose points are grid nodes.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _prefix_max(cost):
    k = cost.shape[0]
    best = np.zeros(k)
    for b in range(1, k):
        m = cost[0, b]
        for c in range(1, b):
            v = best[c] + cost[c, b]
            if v > m:
                m = v
        best[b] = m
    return best


@njit(cache=True)
def _all_intervals(cost):
    k = cost.shape[0]
    out = np.zeros((k, k))
    for a in range(k):
        for b in range(a + 1, k):
            m = cost[a, b]
            for c in range(a + 1, b):
                v = out[a, c] + cost[c, b]
                if v > m:
                    m = v
            out[a, b] = m
    return out


def max_partition_sum(cost: np.ndarray) -> float:
    """``max`` over partitions of ``[t_0, t_{K-1}]`` of the summed piece costs."""
    cost = np.ascontiguousarray(cost, dtype=float)
    if cost.shape[0] < 2:
        return 0.0
    return float(_prefix_max(cost)[-1])


def prefix_partition_sums(cost: np.ndarray) -> np.ndarray:
    """Vector whose entry ``b`` is the best partition sum over ``[t_0, t_b]``."""
    cost = np.ascontiguousarray(cost, dtype=float)
    if cost.shape[0] < 2:
        return np.zeros(cost.shape[0])
    return _prefix_max(cost)


def all_interval_partition_sums(cost: np.ndarray) -> np.ndarray:
    """Matrix whose entry ``(a, b)`` is the best partition sum over ``[t_a, t_b]``."""
    cost = np.ascontiguousarray(cost, dtype=float)
    return _all_intervals(cost)


def pairwise_distances(values: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between rows of ``values`` (shape ``(K, D)``)."""
    v = np.asarray(values, dtype=float).reshape(values.shape[0], -1)
    sq = np.sum(v * v, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * v @ v.T
    d2 = np.maximum(d2, 0.0)
    # the Gram trick loses accuracy for close rows; refine small entries directly
    small = d2 < 1e-8 * (sq[:, None] + sq[None, :] + 1e-300)
    if np.any(small):
        ii, jj = np.nonzero(small)
        diff = v[ii] - v[jj]
        d2[ii, jj] = np.sum(diff * diff, axis=1)
    return np.sqrt(d2)


def path_variation(values: np.ndarray, p: float) -> float:
    """Grid p-variation ``(sup sum |x_{t_i t_{i+1}}|^p)^{1/p}`` of a vector path."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 2:
        return 0.0
    if values.ndim == 1:
        values = values[:, None]
    cost = pairwise_distances(values) ** p
    return max_partition_sum(cost) ** (1.0 / p)
