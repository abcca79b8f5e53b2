"""Annotation ingestion, cleaning, aggregation and train/val splitting.

Raw annotations are line-delimited JSON, one object per line::

    {"video_id": "v0001", "annotator_id": "a07",
     "scores": {"Overall": 7, "Com": 6, ...},
     "comment": "soft side light, well balanced frame",
     "tags": ["side_light", "rule_of_thirds"]}

``scores``, ``comment`` and ``tags`` may each be absent (tag-only annotators
carry no scores, score annotators may leave tags empty).
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

GENERAL_DIMENSIONS = ("Overall", "Com", "SS", "Lig", "V&T", "Col", "D&F")
CHARACTER_DIMENSIONS = ("Exp", "Mov", "Cos", "Mak")
DIMENSIONS = GENERAL_DIMENSIONS + CHARACTER_DIMENSIONS

# Column order used by agreement tables and metric reports.
REPORT_ORDER = ("Overall", "V&T", "SS", "D&F", "Lig", "Com", "Col", "Mov", "Mak", "Cos", "Exp")

DIMENSION_NAMES = {
    "Overall": "Overall",
    "Com": "Composition",
    "SS": "Shot Size",
    "Lig": "Lighting",
    "V&T": "Visual Tone",
    "Col": "Color",
    "D&F": "Depth of Field",
    "Exp": "Expression",
    "Mov": "Movement",
    "Cos": "Costume",
    "Mak": "Makeup",
}

CATEGORIES = ("character", "scenery", "architecture", "food")

TAG_VOCABULARY: dict[str, tuple[str, ...]] = {
    "camera movement": (
        "fixed", "push_in", "pull_out", "pan", "tilt",
        "tracking", "crane", "handheld", "orbit", "zoom",
    ),
    "composition": (
        "center", "rule_of_thirds", "symmetric", "diagonal", "leading_lines",
        "frame_within_frame", "golden_ratio", "horizontal", "vertical",
        "triangle", "negative_space", "foreground_framing",
    ),
    "lighting": (
        "front_light", "side_light", "backlight", "top_light", "bottom_light",
        "rim_light", "high_key", "low_key", "natural_light", "hard_light",
        "soft_light", "silhouette",
    ),
}

ALL_TAGS: tuple[str, ...] = tuple(t for group in TAG_VOCABULARY.values() for t in group)
TAG_CATEGORY = {t: cat for cat, group in TAG_VOCABULARY.items() for t in group}


class VideoExcluded(Exception):
    """Raised when a cleaning rule removes a whole video."""

    def __init__(self, rule: str, detail: str = ""):
        super().__init__(f"{rule}: {detail}" if detail else rule)
        self.rule = rule
        self.detail = detail


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    category: str
    duration_s: float | None = None
    frame_source: str | None = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.duration_s is not None and not 5.0 <= self.duration_s <= 20.0:
            logger.warning("video %s duration %.1fs outside [5, 20]", self.video_id, self.duration_s)

    @property
    def dimensions(self) -> tuple[str, ...]:
        return DIMENSIONS if self.category == "character" else GENERAL_DIMENSIONS


@dataclass
class AnnotationRecord:
    video_id: str
    annotator_id: str
    scores: dict[str, int] = field(default_factory=dict)
    comment: str | None = None
    tags: frozenset[str] | None = None

    def to_json(self) -> dict:
        out: dict = {"video_id": self.video_id, "annotator_id": self.annotator_id}
        if self.scores:
            out["scores"] = {d: self.scores[d] for d in DIMENSIONS if d in self.scores}
        if self.comment is not None:
            out["comment"] = self.comment
        if self.tags:
            out["tags"] = sorted(self.tags)
        return out


@dataclass
class Reject:
    line: int
    reason: str
    raw: str


@dataclass
class CleanVideoEntry:
    video_id: str
    mean_scores: dict[str, float]
    retained_ratings: dict[str, list[int]]
    comments: list[str]
    tags: Counter

    @property
    def score_valid(self) -> bool:
        return bool(self.mean_scores)

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "mean_scores": {d: self.mean_scores[d] for d in DIMENSIONS if d in self.mean_scores},
            "retained_ratings": {
                d: list(self.retained_ratings[d]) for d in DIMENSIONS if d in self.retained_ratings
            },
            "comments": list(self.comments),
            "tags": {t: self.tags[t] for t in sorted(self.tags)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CleanVideoEntry":
        return cls(
            video_id=obj["video_id"],
            mean_scores={k: float(v) for k, v in obj["mean_scores"].items()},
            retained_ratings={k: [int(r) for r in v] for k, v in obj["retained_ratings"].items()},
            comments=list(obj["comments"]),
            tags=Counter({k: int(v) for k, v in obj["tags"].items()}),
        )


# ---------------------------------------------------------------- ingestion


def _validate(obj) -> AnnotationRecord:
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    unknown = set(obj) - {"video_id", "annotator_id", "scores", "comment", "tags"}
    if unknown:
        raise ValueError(f"unknown fields {sorted(unknown)}")
    for key in ("video_id", "annotator_id"):
        if not isinstance(obj.get(key), str) or not obj[key]:
            raise ValueError(f"missing {key}")
    scores = obj.get("scores") or {}
    if not isinstance(scores, dict):
        raise ValueError("scores is not a mapping")
    for dim, value in scores.items():
        if dim not in DIMENSIONS:
            raise ValueError(f"unknown dimension {dim!r}")
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"score for {dim} is not an integer")
        if not 1 <= value <= 10:
            raise ValueError("score out of range")
    comment = obj.get("comment")
    if comment is not None and not isinstance(comment, str):
        raise ValueError("comment is not a string")
    tags = obj.get("tags")
    if tags is not None:
        if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
            raise ValueError("tags is not a list of strings")
        bad = [t for t in tags if t not in TAG_CATEGORY]
        if bad:
            raise ValueError(f"tag not in vocabulary: {bad[0]}")
        tags = frozenset(tags)
    return AnnotationRecord(obj["video_id"], obj["annotator_id"], dict(scores), comment, tags)


def parse_annotations(lines: Iterable[str]) -> tuple[list[AnnotationRecord], list[Reject]]:
    records, rejects = [], []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(_validate(json.loads(line)))
        except json.JSONDecodeError as exc:
            rejects.append(Reject(lineno, f"malformed json: {exc.msg}", line.rstrip("\n")))
        except ValueError as exc:
            rejects.append(Reject(lineno, str(exc), line.rstrip("\n")))
    return records, rejects


def ingest_annotations(path) -> tuple[list[AnnotationRecord], list[Reject]]:
    """Read a JSONL annotation file; returns ``(records, rejects)``.

    I/O failures propagate. Malformed lines never abort ingestion, they are
    collected into the rejects list with a reason.
    """
    with open(path, encoding="utf-8") as fh:
        return parse_annotations(fh)


def write_annotations(path, records: Sequence[AnnotationRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


# ----------------------------------------------------------------- cleaning


def _drop_deviants(ratings: Sequence[int], keep: list[int], max_sq_dev: float) -> list[int]:
    while keep:
        mean = sum(ratings[i] for i in keep) / len(keep)
        survivors = [i for i in keep if (ratings[i] - mean) ** 2 <= max_sq_dev]
        if len(survivors) == len(keep):
            break
        keep = survivors
    return keep


def retained_rating_indices(
    ratings: Sequence[int],
    min_raters: int = 5,
    max_sq_dev: float = 8.0,
    max_range: int = 5,
) -> list[int]:
    """Like :func:`clean_scores` but returns positions into ``ratings``."""
    if len(ratings) < min_raters:
        raise VideoExcluded("min_raters", f"{len(ratings)} < {min_raters}")
    keep = _drop_deviants(ratings, list(range(len(ratings))), max_sq_dev)
    while keep:
        values = [ratings[i] for i in keep]
        if max(values) - min(values) <= max_range:
            break
        mean = sum(values) / len(values)
        keep.remove(max(keep, key=lambda i: (abs(ratings[i] - mean), ratings[i])))
        # the mean moved, so the deviation rule can fire again
        keep = _drop_deviants(ratings, keep, max_sq_dev)
    if len(keep) < min_raters:
        raise VideoExcluded("min_raters_after_cleaning", f"{len(keep)} < {min_raters}")
    return keep


def clean_scores(
    ratings: Sequence[int],
    min_raters: int = 5,
    max_sq_dev: float = 8.0,
    max_range: int = 5,
) -> list[int]:
    """Apply the score cleaning rules to one video's ratings of one dimension.

    Order: too few raters -> squared-deviation outliers (fixed point, mean
    recomputed per pass) -> range reduction (drop the rating farthest from the
    mean, the larger one on ties) -> survivor count check. Survivors keep
    their input order. Raises :class:`VideoExcluded` when the video drops out.
    """
    ratings = [int(r) for r in ratings]
    keep = retained_rating_indices(ratings, min_raters, max_sq_dev, max_range)
    return [ratings[i] for i in keep]


def clean_tags(per_annotator_tags: Sequence[Iterable[str]], min_distinct: int = 3) -> Counter:
    """Drop tags chosen by a single annotator; exclude videos left with too few tags.

    Returns the retained tag multiset (tag -> number of annotators choosing it).
    """
    counts: Counter = Counter()
    for tags in per_annotator_tags:
        counts.update(set(tags))
    retained = Counter({t: c for t, c in counts.items() if c > 1})
    if len(retained) < min_distinct:
        raise VideoExcluded("tag_count", f"{len(retained)} distinct tags retained")
    return retained


def comment_tokens(text: str) -> frozenset[str]:
    return frozenset(text.lower().split())


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def clean_comments(comments: Sequence[str], similarity_threshold: float = 0.9) -> list[str]:
    """Remove near-duplicate comments (token Jaccard above the threshold).

    The later comment of a similar pair is dropped; comparisons are made only
    against comments that survived.
    """
    if not 0.0 < similarity_threshold <= 1.0:
        raise ValueError("similarity_threshold must lie in (0, 1]")
    kept: list[str] = []
    kept_tokens: list[frozenset] = []
    for text in comments:
        toks = comment_tokens(text)
        if any(
            toks == prev or jaccard(toks, prev) > similarity_threshold for prev in kept_tokens
        ):
            continue
        kept.append(text)
        kept_tokens.append(toks)
    return kept


def aggregate_scores(retained: dict[str, Sequence[int]], video_id: str = "") -> CleanVideoEntry:
    means = {d: float(np.mean(np.asarray(r, dtype=np.float64))) for d, r in retained.items()}
    return CleanVideoEntry(
        video_id=video_id,
        mean_scores=means,
        retained_ratings={d: list(r) for d, r in retained.items()},
        comments=[],
        tags=Counter(),
    )


def split_train_val(ids: Sequence[str], seed: int, train_fraction: float = 0.8) -> tuple[list[str], list[str]]:
    """Seeded 4:1 split; ``floor(0.8 * N)`` ids go to train."""
    n = len(ids)
    if n < 5:
        raise ValueError(f"need at least 5 entries to split 4:1, got {n}")
    if len(set(ids)) != n:
        raise ValueError("duplicate ids")
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(train_fraction * n + 1e-9)
    shuffled = [ids[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:]


# ------------------------------------------------------------ whole dataset


@dataclass
class Exclusion:
    video_id: str
    scope: str  # "scores", "tags", "comments" or "video"
    rule: str
    dimension: str | None = None

    def to_json(self) -> dict:
        out = {"video_id": self.video_id, "scope": self.scope, "rule": self.rule}
        if self.dimension is not None:
            out["dimension"] = self.dimension
        return out


@dataclass
class CleaningConfig:
    min_raters: int = 5
    max_sq_dev: float = 8.0
    max_range: int = 5
    min_distinct_tags: int = 3
    comment_similarity: float = 0.9


@dataclass
class CleanedDataset:
    entries: list[CleanVideoEntry]
    exclusions: list[Exclusion]
    records: list[AnnotationRecord]  # surviving annotations, same schema as the input

    def score_entries(self) -> list[CleanVideoEntry]:
        return [e for e in self.entries if e.score_valid]


def clean_dataset(records: Sequence[AnnotationRecord], config: CleaningConfig | None = None) -> CleanedDataset:
    """Run every cleaning rule over a full annotation set.

    Videos failing score cleaning keep their comments and tags (they still
    serve contrastive pretraining). A video is dropped entirely only when no
    scores, tags or comments survive.
    """
    cfg = config or CleaningConfig()
    by_video: dict[str, list[AnnotationRecord]] = {}
    for rec in records:
        by_video.setdefault(rec.video_id, []).append(rec)

    entries, exclusions, kept_records = [], [], []
    for vid in sorted(by_video):
        recs = by_video[vid]
        # scores
        dims = [d for d in DIMENSIONS if any(d in r.scores for r in recs)]
        retained: dict[str, list[int]] = {}
        score_idx: dict[str, list[int]] = {}
        score_fail = None
        for d in dims:
            idx = [i for i, r in enumerate(recs) if d in r.scores]
            ratings = [recs[i].scores[d] for i in idx]
            try:
                pos = retained_rating_indices(ratings, cfg.min_raters, cfg.max_sq_dev, cfg.max_range)
            except VideoExcluded as exc:
                score_fail = Exclusion(vid, "scores", exc.rule, d)
                break
            kept = [ratings[p] for p in pos]
            chosen = [idx[p] for p in pos]
            retained[d] = kept
            score_idx[d] = chosen
        if not dims:
            score_fail = Exclusion(vid, "scores", "min_raters", None)
        if score_fail is not None:
            exclusions.append(score_fail)
            retained, score_idx = {}, {}

        # tags
        tag_sets = [r.tags for r in recs if r.tags]
        try:
            tags = clean_tags(tag_sets, cfg.min_distinct_tags)
        except VideoExcluded as exc:
            exclusions.append(Exclusion(vid, "tags", exc.rule))
            tags = Counter()

        # comments
        raw_comments = [r.comment for r in recs if r.comment and r.comment.strip()]
        comments = clean_comments(raw_comments, cfg.comment_similarity)
        if not comments:
            exclusions.append(Exclusion(vid, "comments", "no_comments"))

        if not retained and not tags and not comments:
            exclusions.append(Exclusion(vid, "video", "nothing_retained"))
            continue

        entry = aggregate_scores(retained, vid)
        entry.comments = comments
        entry.tags = tags
        entries.append(entry)

        comment_pool = list(comments)
        for i, r in enumerate(recs):
            scores = {d: r.scores[d] for d in retained if i in score_idx[d]}
            comment = None
            if r.comment in comment_pool:
                comment = r.comment
                comment_pool.remove(r.comment)
            rtags = frozenset(t for t in (r.tags or ()) if t in tags) or None
            if scores or comment is not None or rtags:
                kept_records.append(AnnotationRecord(vid, r.annotator_id, scores, comment, rtags))
    return CleanedDataset(entries, exclusions, kept_records)


def agreement_matrix(records: Sequence[AnnotationRecord], dimension: str) -> np.ndarray:
    """Items x raters matrix of one dimension's ratings, NaN where missing."""
    videos = sorted({r.video_id for r in records if dimension in r.scores})
    raters = sorted({r.annotator_id for r in records if dimension in r.scores})
    vi = {v: i for i, v in enumerate(videos)}
    ri = {a: j for j, a in enumerate(raters)}
    mat = np.full((len(videos), len(raters)), np.nan)
    for r in records:
        if dimension in r.scores:
            mat[vi[r.video_id], ri[r.annotator_id]] = r.scores[dimension]
    return mat
