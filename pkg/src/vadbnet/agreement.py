"""Krippendorff's alpha with the ordinal difference metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import REPORT_ORDER, AnnotationRecord, agreement_matrix


class UndefinedStatistic(ValueError):
    """The statistic has no defined value for this input."""


def coincidence_matrix(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(values, o)`` where ``o[c, k]`` is the coincidence count.

    ``matrix`` is items x raters with NaN for missing cells. Items carrying
    fewer than two ratings are not pairable and contribute nothing.
    """
    data = np.asarray(matrix, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("expected an items x raters matrix")
    values = np.unique(data[~np.isnan(data)])
    o = np.zeros((len(values), len(values)))
    for row in data:
        row = row[~np.isnan(row)]
        m = len(row)
        if m < 2:
            continue
        counts = np.bincount(np.searchsorted(values, row), minlength=len(values)).astype(np.float64)
        # ordered pairs of distinct ratings within the item
        o += (np.outer(counts, counts) - np.diag(counts)) / (m - 1)
    return values, o


def ordinal_distance(marginals: np.ndarray) -> np.ndarray:
    """Squared ordinal distance between every pair of value ranks."""
    cum = np.concatenate([[0.0], np.cumsum(marginals)])
    n = len(marginals)
    c = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    lo, hi = np.minimum(c, k), np.maximum(c, k)
    span = cum[hi + 1] - cum[lo] - (marginals[c] + marginals[k]) / 2.0
    return span**2


def krippendorff_alpha_ordinal(matrix) -> float:
    values, o = coincidence_matrix(matrix)
    n_c = o.sum(axis=1)
    n = n_c.sum()
    if n < 2:
        raise UndefinedStatistic("fewer than 2 pairable values")
    delta = ordinal_distance(n_c)
    d_obs = (o * delta).sum() / n
    if d_obs == 0.0:
        return 1.0
    d_exp = (np.outer(n_c, n_c) * delta).sum() / (n * (n - 1))
    return float(1.0 - d_obs / d_exp)


@dataclass
class AgreementRow:
    dimension: str
    alpha: float | None
    items: int
    raters: int


def agreement_report(records: list[AnnotationRecord]) -> list[AgreementRow]:
    rows = []
    for dim in REPORT_ORDER:
        mat = agreement_matrix(records, dim)
        if mat.size == 0:
            continue
        try:
            alpha = krippendorff_alpha_ordinal(mat)
        except UndefinedStatistic:
            alpha = None
        rows.append(AgreementRow(dim, alpha, mat.shape[0], mat.shape[1]))
    return rows


def render_agreement(rows: list[AgreementRow]) -> str:
    head = ["Dimension"] + [r.dimension for r in rows]
    vals = ["Alpha"] + ["n/a" if r.alpha is None else f"{r.alpha:.2f}" for r in rows]
    widths = [max(len(a), len(b)) for a, b in zip(head, vals)]
    fmt = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))  # noqa: E731
    return fmt(head) + "\n" + fmt(vals) + "\n"
