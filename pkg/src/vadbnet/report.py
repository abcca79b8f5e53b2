"""Per-dimension metric reports: machine-readable document and text tables."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .agreement import UndefinedStatistic
from .dataset import REPORT_ORDER, DIMENSION_NAMES
from .metrics import METRICS, TESTED, PairedSample
from .stats import UnstableEstimate, bootstrap_ci, permutation_pvalue

DEFAULT_METRICS = ("SRCC", "PLCC", "KRCC", "RMSE", "MSE", "ACC")
FIELDS = ("estimate", "ci_lo", "ci_hi", "err_lo", "err_hi", "p")


@dataclass
class MetricRow:
    estimate: float | None
    ci_lo: float | None = None
    ci_hi: float | None = None
    err_lo: float | None = None
    err_hi: float | None = None
    p: float | None = None
    degenerate: int = 0
    flagged: bool = False
    note: str = ""

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate,
            "ci": [self.ci_lo, self.ci_hi],
            "err": [self.err_lo, self.err_hi],
            "p": self.p,
            "degenerate": self.degenerate,
            "flagged": self.flagged,
            "note": self.note,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MetricRow":
        (lo, hi), (el, eh) = obj["ci"], obj["err"]
        return cls(obj["estimate"], lo, hi, el, eh, obj["p"], obj["degenerate"], obj["flagged"], obj["note"])


@dataclass
class EvaluationSettings:
    bootstrap: int = 1000
    level: float = 0.95
    permutations: int = 10000
    threshold: float = 5.0
    seed: int = 0
    metrics: tuple[str, ...] = DEFAULT_METRICS


class MetricsReport:
    def __init__(self, rows: dict[str, dict[str, MetricRow]], meta: dict | None = None):
        self.rows = rows
        self.meta = meta or {}

    @property
    def dimensions(self) -> list[str]:
        known = [d for d in REPORT_ORDER if d in self.rows]
        return known + sorted(d for d in self.rows if d not in REPORT_ORDER)

    @property
    def metrics(self) -> list[str]:
        seen: list[str] = []
        for dim in self.dimensions:
            for m in self.rows[dim]:
                if m not in seen:
                    seen.append(m)
        return seen

    def __getitem__(self, key):
        return self.rows[key]

    def __eq__(self, other):
        return isinstance(other, MetricsReport) and self.to_json() == other.to_json()

    def to_json(self) -> dict:
        return {
            "meta": self.meta,
            "dimensions": {d: {m: r.to_json() for m, r in self.rows[d].items()} for d in self.dimensions},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsReport":
        rows = {d: {m: MetricRow.from_json(r) for m, r in ms.items()} for d, ms in obj["dimensions"].items()}
        return cls(rows, obj.get("meta", {}))

    def save(self, path, table_path=None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())
        if table_path is not None:
            with open(table_path, "w", encoding="utf-8") as fh:
                fh.write(render_table(self))

    @classmethod
    def load(cls, path) -> "MetricsReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _seed(base: int, *parts: int) -> int:
    return int(np.random.SeedSequence([base, *parts]).generate_state(1)[0])


def evaluate_sample(sample: PairedSample, settings: EvaluationSettings, dim_index: int = 0) -> dict[str, MetricRow]:
    out: dict[str, MetricRow] = {}
    for m_index, name in enumerate(settings.metrics):
        fn = METRICS[name]
        if name == "ACC":
            fn = lambda x, y, t=settings.threshold: METRICS["ACC"](x, y, t)  # noqa: E731
        try:
            ci = bootstrap_ci(fn, sample.predictions, sample.ground_truth, settings.bootstrap, settings.level,
                              _seed(settings.seed, dim_index, m_index, 0))
        except (UndefinedStatistic, UnstableEstimate) as exc:
            out[name] = MetricRow(None, note=str(exc))
            continue
        p = None
        if name in TESTED:
            metric = name if name != "ACC" else fn
            p = permutation_pvalue(metric, sample.predictions, sample.ground_truth, settings.permutations,
                                   _seed(settings.seed, dim_index, m_index, 1))
        out[name] = MetricRow(ci.estimate, ci.lo, ci.hi, ci.err_lo, ci.err_hi, p, ci.degenerate, ci.flagged)
    return out


def build_report(samples, settings: EvaluationSettings | None = None, meta: dict | None = None) -> MetricsReport:
    """``samples``: iterable of :class:`PairedSample` or mapping dimension -> (pred, truth)."""
    settings = settings or EvaluationSettings()
    if isinstance(samples, dict):
        samples = [PairedSample(p, t, d) for d, (p, t) in samples.items()]
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one dimension")
    rows = {}
    for s in samples:
        idx = REPORT_ORDER.index(s.dimension) if s.dimension in REPORT_ORDER else len(REPORT_ORDER)
        rows[s.dimension] = evaluate_sample(s, settings, idx)
    meta = dict(meta or {})
    meta.setdefault("settings", {**asdict(settings), "metrics": list(settings.metrics)})
    return MetricsReport(rows, meta)


# ---------------------------------------------------------------- rendering


def _fmt(v, field: str) -> str:
    if v is None:
        return "-"
    if field == "p":
        return "<0.001" if v < 0.001 else f"{v:.3f}"
    return f"{v:.2f}"


def render_table(report: MetricsReport) -> str:
    """Dimensions as columns, one row group per metric; two decimals."""
    dims = report.dimensions
    lines = [["Metric", "Field"] + dims]
    for m in report.metrics:
        for f in FIELDS:
            if f == "p" and m not in TESTED:
                continue
            cells = []
            for d in dims:
                row = report.rows[d].get(m)
                cells.append(_fmt(getattr(row, f) if row else None, f))
            lines.append([m, f] + cells)
    widths = [max(len(r[i]) for r in lines) for i in range(len(lines[0]))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in lines)


def parse_table(text: str) -> dict[str, dict[str, dict[str, float | str | None]]]:
    """Inverse of :func:`render_table` at display precision."""
    lines = [ln.split() for ln in text.strip().splitlines()]
    dims = lines[0][2:]
    out: dict = {d: {} for d in dims}
    for metric, field, *cells in lines[1:]:
        for d, c in zip(dims, cells):
            val: float | str | None
            if c == "-":
                val = None
            elif c.startswith("<"):
                val = c
            else:
                val = float(c)
            out[d].setdefault(metric, {})[field] = val
    return out


def displayed(report: MetricsReport) -> dict:
    """The values :func:`render_table` shows, for comparing against :func:`parse_table`."""
    out: dict = {}
    for d in report.dimensions:
        out[d] = {}
        for m, r in report.rows[d].items():
            cells = {}
            for f in FIELDS:
                if f == "p" and m not in TESTED:
                    continue
                text = _fmt(getattr(r, f), f)
                cells[f] = None if text == "-" else (text if text.startswith("<") else float(text))
            out[d][m] = cells
    return out


def render_significance(report: MetricsReport, digits: int = 4) -> str:
    """One block per dimension: value, p-value, confidence interval and error bars."""
    out = []
    for d in report.dimensions:
        out.append(f"{DIMENSION_NAMES.get(d, d)}")
        for m, r in report.rows[d].items():
            if r.estimate is None:
                out.append(f"  {m:<6} undefined ({r.note})")
                continue
            p = "-" if r.p is None else ("<0.001" if r.p < 0.001 else f"{r.p:.{digits}f}")
            flag = "  [estimate outside CI]" if r.flagged else ""
            out.append(
                f"  {m:<6} {r.estimate:.{digits}f}  p={p:<7} [{r.ci_lo:.{digits}f}, {r.ci_hi:.{digits}f}]"
                f"  ({r.err_lo:.{digits}f}, {r.err_hi:.{digits}f}){flag}"
            )
    return "\n".join(out) + "\n"
