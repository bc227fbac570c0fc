"""Evaluation metrics and label preprocessing.

Spearman correlation is the Pearson correlation of average ranks (ties
get the mean of their rank range). Label statistics use the population
standard deviation, matching a literal zero-mean/unit-variance
normalization. Everything here is stateless and computed in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError

__all__ = [
    "LabelStats",
    "spearman",
    "average_ranks",
    "mae",
    "fit_labels",
    "normalize",
    "denormalize",
    "residual_stats",
]


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise MetricError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise MetricError(f"{name} contains non-finite values")
    return arr


def _check_paired(pred, target, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    p = _as_vector(pred, "pred")
    t = _as_vector(target, "target")
    if p.size != t.size:
        raise MetricError(f"length mismatch: pred has {p.size}, target has {t.size}")
    if p.size < min_len:
        raise MetricError(f"need at least {min_len} pairs, got {p.size}")
    return p, t


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    v = _as_vector(values, "values")
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(pred, target) -> float:
    """Rank correlation in [-1, 1] of two equal-length scalar lists."""
    p, t = _check_paired(pred, target, min_len=2)
    if np.all(t == t[0]):
        raise MetricError("spearman is undefined for a constant target")
    if np.all(p == p[0]):
        raise MetricError("spearman is undefined for constant predictions")
    rp = average_ranks(p)
    rt = average_ranks(t)
    rp -= rp.mean()
    rt -= rt.mean()
    return float(rp @ rt / np.sqrt((rp @ rp) * (rt @ rt)))


def mae(pred, target) -> float:
    """Mean absolute error, accumulated in float64."""
    p, t = _check_paired(pred, target)
    return float(np.abs(p - t).mean())


@dataclass(frozen=True)
class LabelStats:
    """Mean and population standard deviation of one label."""

    mean: float
    std: float
    name: str = ""

    def __post_init__(self):
        if not np.isfinite(self.mean) or not np.isfinite(self.std):
            raise MetricError(f"label stats for {self.name!r} are not finite")


def fit_labels(values, name: str = "") -> LabelStats:
    """Population mean/std of a label vector; std must be positive."""
    v = _as_vector(values, "labels")
    mean = float(v.mean())
    std = float(v.std())  # population (ddof=0)
    if std <= 0.0:
        raise MetricError(f"label {name!r} is constant; cannot normalize (std 0)")
    return LabelStats(mean, std, name)


def normalize(values, stats: LabelStats) -> np.ndarray:
    """(values - mean) / std."""
    v = np.asarray(values, dtype=np.float64)
    if stats.std <= 0:
        raise MetricError(f"label {stats.name!r} has non-positive std")
    return (v - stats.mean) / stats.std


def denormalize(pred, stats: LabelStats) -> np.ndarray:
    """pred * std + mean; inverse of :func:`normalize`."""
    return np.asarray(pred, dtype=np.float64) * stats.std + stats.mean


def residual_stats(pred, target) -> tuple[float, float, float]:
    """(mean error, population std of error, overprediction fraction).

    Errors are pred - target; the fraction counts strictly positive errors.
    """
    p, t = _check_paired(pred, target)
    err = p - t
    return float(err.mean()), float(err.std()), float((err > 0).mean())
