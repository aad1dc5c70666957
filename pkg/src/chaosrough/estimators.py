"""scikit-learn transformers over sampled paths.

Each row of the input holds one path sampled on a common grid, flattened as
``(n_nodes, n_channels)`` in C order.  The transformers are stateless apart
from the input shape recorded by ``fit``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import greedy_count
from .roughlift import lift_piecewise_linear, p_variation

__all__ = ["LevelTwoSignature", "HomogeneousPVariation", "GreedyCount"]


class _PathTransformer(TransformerMixin, BaseEstimator):
    def _paths(self, X, fitting: bool):
        X = check_array(X, dtype=np.float64)
        c = self.n_channels
        if c < 1 or X.shape[1] % c or X.shape[1] // c < 2:
            raise ValueError(f"{X.shape[1]} features do not form paths with {c} channels and at least two nodes")
        if fitting:
            self.n_features_in_ = X.shape[1]
            self.n_nodes_ = X.shape[1] // c
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, fitted with {self.n_features_in_}")
        grid = np.linspace(0.0, 1.0, X.shape[1] // c)
        return [lift_piecewise_linear(row.reshape(-1, c), grid) for row in X]

    def fit(self, X, y=None):
        self._paths(X, fitting=True)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        return np.array([self._features(x) for x in self._paths(X, fitting=False)])


class LevelTwoSignature(_PathTransformer):
    """Total increment and flattened level-2 iterated integral of each path.

    Parameters
    ----------
    n_channels : int
        Number of path components ``d``; output has ``d + d^2`` columns.
    """

    def __init__(self, n_channels: int = 1):
        self.n_channels = n_channels

    def _features(self, x):
        inc, area = x.increment(0, x.n_nodes - 1)
        return np.concatenate([inc, area.ravel()])


class HomogeneousPVariation(_PathTransformer):
    """Homogeneous p-variation norm with its level-1 and level-2 parts."""

    def __init__(self, p: float = 2.5, n_channels: int = 1):
        self.p = p
        self.n_channels = n_channels

    def _features(self, x):
        r = p_variation(x, self.p)
        return np.array([r.norm, r.level1, r.level2])


class GreedyCount(_PathTransformer):
    """Greedy count ``N_alpha`` of each path (one column)."""

    def __init__(self, alpha: float = 0.25, p: float = 2.5, n_channels: int = 1):
        self.alpha = alpha
        self.p = p
        self.n_channels = n_channels

    def _features(self, x):
        return np.array([float(greedy_count(x, self.alpha, self.p)[0])])
