"""Bootstrap confidence intervals and permutation p-values for paired metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .agreement import UndefinedStatistic
from .metrics import METRICS, plcc, rankdata

Metric = Callable[[np.ndarray, np.ndarray], float]


class UnstableEstimate(RuntimeError):
    """Too many bootstrap resamples had no defined metric value."""


def _resolve(metric) -> tuple[str | None, Metric]:
    if isinstance(metric, str):
        return metric, METRICS[metric]
    return None, metric


def error_bars(estimate: float, lo: float, hi: float) -> tuple[float, float]:
    return estimate - lo, hi - estimate


@dataclass
class Interval:
    estimate: float
    lo: float
    hi: float
    err_lo: float
    err_hi: float
    degenerate: int = 0
    # percentile intervals need not contain the full-sample estimate; such rows are flagged, not clamped
    flagged: bool = False


def bootstrap_ci(metric, pred, truth, B: int = 1000, level: float = 0.95, seed: int = 0) -> Interval:
    """Paired percentile bootstrap."""
    _, fn = _resolve(metric)
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise UndefinedStatistic("bootstrap needs at least 2 pairs")
    estimate = fn(x, y)
    idx = np.random.default_rng(seed).integers(0, n, size=(B, n))
    stats, degenerate = [], 0
    for row in idx:
        try:
            stats.append(fn(x[row], y[row]))
        except UndefinedStatistic:
            degenerate += 1
    if degenerate > B / 2:
        raise UnstableEstimate(f"{degenerate} of {B} resamples were degenerate")
    tail = (1.0 - level) / 2.0
    lo, hi = (float(v) for v in np.quantile(np.asarray(stats), [tail, 1.0 - tail]))
    err_lo, err_hi = error_bars(estimate, lo, hi)
    return Interval(estimate, lo, hi, err_lo, err_hi, degenerate, flagged=not lo <= estimate <= hi)


def _rowwise_pearson(x: np.ndarray, ys: np.ndarray) -> np.ndarray:
    xc = x - x.mean()
    yc = ys - ys.mean(axis=1, keepdims=True)
    return (yc @ xc) / np.sqrt((xc @ xc) * np.einsum("ij,ij->i", yc, yc))


def permutation_pvalue(metric, pred, truth, P: int = 10000, seed: int = 0) -> float:
    """Two-sided permutation p-value, ``(1 + #{|stat_perm| >= |stat_obs|}) / (1 + P)``.

    Ground truth is shuffled against fixed predictions. SRCC and PLCC use a
    vectorised path; any other metric is evaluated per permutation.
    """
    name, fn = _resolve(metric)
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if len(x) < 2:
        raise UndefinedStatistic("permutation test needs at least 2 pairs")
    observed = abs(fn(x, y))
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(np.arange(len(y)), (P, 1)), axis=1)
    if name in ("SRCC", "PLCC"):
        if name == "SRCC":
            x, y = rankdata(x), rankdata(y)
        plcc(x, y)  # raises on constant input
        stats = np.abs(_rowwise_pearson(x, y[perms]))
        # absorb last-ulp noise of the vectorised path
        hits = int(np.count_nonzero(stats >= observed - 1e-12))
    else:
        hits = 0
        for row in perms:
            try:
                hits += abs(fn(x, y[row])) >= observed - 1e-12
            except UndefinedStatistic:
                continue
    return (1 + hits) / (1 + P)
