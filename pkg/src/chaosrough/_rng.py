"""Reproducible Gaussian sample streams.

Sample ``i`` of a stream with seed ``s`` lives in chunk ``i // CHUNK`` and is
drawn from ``np.random.default_rng([s, chunk])``, so its value depends only on
``(s, i)`` and never on how a batch is split across workers.
"""

from __future__ import annotations

import numpy as np

CHUNK = 4096


def gaussian_block(seed: int, start: int, count: int, dim: int) -> np.ndarray:
    """Rows ``start .. start+count-1`` of the standard normal stream ``seed``.

    Returns an array of shape ``(count, dim)``.  The stream is defined per
    ``dim``; changing ``dim`` changes every sample.
    """
    if count < 0 or start < 0:
        raise ValueError("start and count must be non-negative")
    out = np.empty((count, dim))
    pos = 0
    i = start
    stop = start + count
    while i < stop:
        chunk = i // CHUNK
        lo = i - chunk * CHUNK
        hi = min(CHUNK, stop - chunk * CHUNK)
        z = np.random.default_rng([int(seed), chunk]).standard_normal((CHUNK, dim))
        n = hi - lo
        out[pos:pos + n] = z[lo:hi]
        pos += n
        i += n
    return out


def iter_gaussian_batches(seed: int, count: int, dim: int, batch: int = CHUNK):
    """Yield ``(start, xi)`` batches covering ``count`` samples."""
    for start in range(0, count, batch):
        yield start, gaussian_block(seed, start, min(batch, count - start), dim)


def mean_and_se(values) -> tuple[float, float]:
    """Sample mean and its standard error."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()) if v.size else float("nan"), float("inf")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))
