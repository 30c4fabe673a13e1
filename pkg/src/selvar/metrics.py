"""Agreement metrics for partitions and classifiers."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError
from .gaussmix import _log_density_rows


def _check_label_pair(a, b):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size == 0 or a.size != b.size:
        raise DataError("label vectors must be non-empty and of equal length")
    return a, b


def _contingency(a, b) -> np.ndarray:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected pair-counting agreement between two partitions.

    Symmetric, invariant to label permutations, 1.0 for identical
    partitions (including the degenerate case where both sides put all
    points in one group).
    """
    a, b = _check_label_pair(a, b)
    table = _contingency(a, b)
    n = a.size

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(table.astype(float)).sum()
    sum_rows = comb2(table.sum(axis=1).astype(float)).sum()
    sum_cols = comb2(table.sum(axis=0).astype(float)).sum()
    total = comb2(float(n))
    expected = sum_rows * sum_cols / total if total > 0 else 0.0
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def error_rate(true_labels, pred_labels, match: bool = False) -> float:
    """Fraction of disagreements between label vectors.

    With match=False labels are compared as given (supervised use).  With
    match=True the predicted labels are first matched to the true ones by
    the permutation maximising agreement, which is the right comparison for
    clustering output whose label identities are arbitrary.
    """
    t, p = _check_label_pair(true_labels, pred_labels)
    if not match:
        return float(np.mean(t != p))
    table = _contingency(t, p)
    rows, cols = linear_sum_assignment(-table)
    return 1.0 - float(table[rows, cols].sum()) / t.size


def map_classify(proportions, means, covariances, data) -> np.ndarray:
    """Maximum a posteriori component labels (1-based) under a Gaussian mixture."""
    Y = np.asarray(data, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    pi = np.asarray(proportions, dtype=float)
    K = pi.size
    logp = np.empty((Y.shape[0], K))
    for k in range(K):
        logp[:, k] = np.log(pi[k]) + _log_density_rows(Y, np.asarray(means[k], dtype=float),
                                                       np.asarray(covariances[k], dtype=float))
    return logp.argmax(axis=1) + 1
