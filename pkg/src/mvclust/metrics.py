"""Clustering accuracy (Hungarian matching) and normalized mutual information."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, UsageError

_TIE_RTOL = 1e-12


def _labels(x, name) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.size == 0:
        raise UsageError(f"{name} must be a non-empty 1-D label vector")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise UsageError(f"{name} must hold integer labels")
        arr = arr.astype(np.int64)
    if arr.min() < 0:
        raise UsageError(f"{name} must hold non-negative labels")
    return arr


def _pair(pred, truth):
    pred, truth = _labels(pred, "pred"), _labels(truth, "truth")
    if pred.shape != truth.shape:
        raise UsageError(f"pred has {pred.size} labels, truth has {truth.size}")
    return pred, truth


def confusion_matrix(pred, truth) -> np.ndarray:
    """Counts with rows = predicted cluster, columns = true class."""
    pred, truth = _pair(pred, truth)
    out = np.zeros((pred.max() + 1, truth.max() + 1), dtype=np.int64)
    np.add.at(out, (pred, truth), 1)
    return out


def hungarian(cost) -> np.ndarray:
    """Minimum-cost assignment on the zero-padded square version of ``cost``.

    Returns ``cols`` with row ``r`` matched to column ``cols[r]``.  Among all
    optimal assignments the lexicographically smallest one is returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise UsageError(f"cost must be a matrix, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise DomainError("cost matrix has non-finite entries")
    size = max(cost.shape)
    square = np.zeros((size, size))
    square[:cost.shape[0], :cost.shape[1]] = cost
    if size == 0:
        return np.zeros(0, dtype=np.intp)

    def best(sub):
        r, c = linear_sum_assignment(sub)
        return sub[r, c].sum()

    tol = _TIE_RTOL * max(1.0, float(np.abs(square).max()) * size)
    rows_left = list(range(size))
    cols_left = list(range(size))
    result = np.empty(size, dtype=np.intp)
    target = best(square)
    for r in range(size):
        rows_left.remove(r)
        for c in cols_left:
            rest = [x for x in cols_left if x != c]
            remaining = best(square[np.ix_(rows_left, rest)]) if rows_left else 0.0
            if square[r, c] + remaining <= target + tol:
                result[r] = c
                cols_left = rest
                target = remaining
                break
        else:  # pragma: no cover - an optimal completion always exists
            raise RuntimeError("lexicographic refinement failed")
    return result


def acc(pred, truth) -> float:
    """Fraction of objects correctly labelled under the best one-to-one
    matching of clusters to classes."""
    conf = confusion_matrix(pred, truth)
    cols = hungarian(-conf)
    size = len(cols)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[:conf.shape[0], :conf.shape[1]] = conf
    return float(padded[np.arange(size), cols].sum()) / conf.sum()


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information over the geometric mean of the two entropies."""
    conf = confusion_matrix(pred, truth).astype(np.float64)
    n = conf.sum()
    h_pred = _entropy(conf.sum(axis=1))
    h_true = _entropy(conf.sum(axis=0))
    if h_pred == 0.0 and h_true == 0.0:
        return 1.0
    if h_pred == 0.0 or h_true == 0.0:
        return 0.0
    joint = conf / n
    outer = np.outer(conf.sum(axis=1), conf.sum(axis=0)) / (n * n)
    nz = joint > 0
    mi = float((joint[nz] * np.log(joint[nz] / outer[nz])).sum())
    return min(max(mi / np.sqrt(h_pred * h_true), 0.0), 1.0)


NMI_NORMALIZATION = "geometric"
