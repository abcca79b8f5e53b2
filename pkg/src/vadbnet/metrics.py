"""Agreement metrics between predicted and ground-truth scores."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agreement import UndefinedStatistic


@dataclass
class PairedSample:
    predictions: np.ndarray
    ground_truth: np.ndarray
    dimension: str = "Overall"

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=np.float64)
        self.ground_truth = np.asarray(self.ground_truth, dtype=np.float64)
        if self.predictions.shape != self.ground_truth.shape or self.predictions.ndim != 1:
            raise ValueError("predictions and ground truth must be 1-d arrays of equal length")

    def __len__(self):
        return len(self.predictions)


def _pair(pred, truth, min_n: int = 2):
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-d arrays of equal length")
    if len(x) < min_n:
        raise UndefinedStatistic(f"need at least {min_n} pairs")
    return x, y


def rankdata(x: np.ndarray) -> np.ndarray:
    """Average ranks (1-based), ties share the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    starts = np.flatnonzero(np.r_[True, sorted_x[1:] != sorted_x[:-1]])
    ends = np.r_[starts[1:], len(x)]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def plcc(pred, truth) -> float:
    x, y = _pair(pred, truth)
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatistic("constant input")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def srcc(pred, truth) -> float:
    x, y = _pair(pred, truth)
    return plcc(rankdata(x), rankdata(y))


def kendall_counts(pred, truth, chunk: int = 2048) -> tuple[int, int, int, int, int]:
    """Pair counts ``(concordant, discordant, tied_x, tied_y, total)`` by explicit enumeration.

    ``tied_x`` includes pairs tied in both variables, as does ``tied_y``.
    """
    x, y = _pair(pred, truth)
    n = len(x)
    conc = disc = tx = ty = 0
    for s in range(0, n, chunk):
        xi, yi = x[s:s + chunk, None], y[s:s + chunk, None]
        dx = np.sign(xi - x[None, :])
        dy = np.sign(yi - y[None, :])
        upper = np.arange(s, min(s + chunk, n))[:, None] < np.arange(n)[None, :]
        prod = dx * dy
        conc += int(np.count_nonzero((prod > 0) & upper))
        disc += int(np.count_nonzero((prod < 0) & upper))
        tx += int(np.count_nonzero((dx == 0) & upper))
        ty += int(np.count_nonzero((dy == 0) & upper))
    return conc, disc, tx, ty, n * (n - 1) // 2


def krcc(pred, truth) -> float:
    """Kendall tau-b."""
    conc, disc, tx, ty, n0 = kendall_counts(pred, truth)
    if n0 == tx or n0 == ty:
        raise UndefinedStatistic("constant input")
    return (conc - disc) / math.sqrt((n0 - tx) * (n0 - ty))


def mse(pred, truth) -> float:
    x, y = _pair(pred, truth, min_n=1)
    return float(np.mean((x - y) ** 2))


def rmse(pred, truth) -> float:
    return math.sqrt(mse(pred, truth))


def binary_accuracy(pred, truth, threshold: float = 5.0) -> float:
    """Agreement rate after thresholding both vectors (``>= threshold`` is positive)."""
    x, y = _pair(pred, truth, min_n=1)
    return float(np.mean((x >= threshold) == (y >= threshold)))


METRICS = {
    "SRCC": srcc,
    "PLCC": plcc,
    "KRCC": krcc,
    "RMSE": rmse,
    "MSE": mse,
    "ACC": binary_accuracy,
}
# metrics that get a permutation p-value
TESTED = ("SRCC", "PLCC", "KRCC", "ACC")
