"""Synthetic video/comment/tag corpus for desk-scale runs.

Each video has a hue, a texture and a latent quality ``q`` in [0, 1]. The
hue and texture are visible in every frame and named in the comments, so
text and video can be aligned; ``q`` sets brightness and contrast and
drives the ground-truth scores (``1 + 8 q`` plus per-dimension offsets).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import CHARACTER_DIMENSIONS, GENERAL_DIMENSIONS, AnnotationRecord, write_annotations
from .frames import FrameClip, sample_frames, save_packed_frames
from .text import tag_text
from .training import PretrainSample, ScoredClip

HUES = {
    "red": (210, 50, 45),
    "orange": (225, 130, 40),
    "yellow": (220, 205, 60),
    "green": (60, 170, 70),
    "teal": (40, 160, 160),
    "blue": (50, 80, 210),
    "purple": (130, 60, 190),
    "pink": (225, 110, 170),
}
TEXTURES = ("striped", "banded", "checkered", "dotted")
QUALITY_WORDS = ("poor", "weak", "plain", "good", "stunning")
TEXTURE_TAGS = {
    "striped": ("horizontal", "pan"),
    "banded": ("vertical", "tilt"),
    "checkered": ("symmetric", "fixed"),
    "dotted": ("negative_space", "zoom"),
}
TEMPLATES = (
    "{q} {hue} {tex} frame",
    "a {q} shot with {hue} tones and a {tex} pattern",
    "{hue} {tex} scene looks {q}",
)


@dataclass
class SyntheticVideo:
    video_id: str
    hue: str
    texture: str
    quality: float
    category: str
    frames: np.ndarray  # uint8 [N, H, W, 3]
    comments: list[str]
    tags: list[str]
    scores: dict[str, float] = field(default_factory=dict)


def _pattern(texture: str, size: int, phase: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    period = max(4, size // 4)
    if texture == "striped":
        pat = ((yy + phase) // (period // 2)) % 2
    elif texture == "banded":
        pat = ((xx + phase) // (period // 2)) % 2
    elif texture == "checkered":
        pat = ((yy // (period // 2)) + ((xx + phase) // (period // 2))) % 2
    else:
        cy = (yy + phase) % period - period / 2
        cx = xx % period - period / 2
        pat = (cy**2 + cx**2 < (period / 3) ** 2).astype(int)
    return pat.astype(np.float64)


def render_frames(hue: str, texture: str, quality: float, n_frames: int, size: int, rng) -> np.ndarray:
    base = np.asarray(HUES[hue], dtype=np.float64)
    bright = 0.3 + 0.7 * quality
    contrast = 0.2 + 0.6 * quality
    frames = []
    for t in range(n_frames):
        pat = _pattern(texture, size, phase=t)
        img = base[None, None, :] * bright * ((1 - contrast) + contrast * pat[..., None])
        img = img + rng.normal(0, 6.0, img.shape)
        frames.append(np.clip(img, 0, 255).astype(np.uint8))
    return np.stack(frames)


def quality_word(q: float) -> str:
    return QUALITY_WORDS[min(int(q * len(QUALITY_WORDS)), len(QUALITY_WORDS) - 1)]


def lighting_tags(q: float) -> tuple[str, ...]:
    return ("high_key", "soft_light") if q >= 0.5 else ("low_key", "hard_light")


def make_videos(
    n: int,
    seed: int = 0,
    n_frames: int = 6,
    size: int = 32,
    comments_per_video: int = 1,
    character_fraction: float = 0.0,
) -> list[SyntheticVideo]:
    """``n`` videos; the first 32 cover every (hue, texture) pair exactly once."""
    rng = np.random.default_rng(seed)
    combos = [(h, t) for t in TEXTURES for h in HUES]
    qualities = rng.permutation(np.linspace(0.02, 0.98, n))
    videos = []
    for i in range(n):
        hue, tex = combos[i % len(combos)]
        q = float(qualities[i])
        category = "character" if rng.random() < character_fraction else "scenery"
        frames = render_frames(hue, tex, q, n_frames, size, rng)
        comments = [
            TEMPLATES[(i + k) % len(TEMPLATES)].format(q=quality_word(q), hue=hue, tex=tex)
            for k in range(comments_per_video)
        ]
        tags = list(TEXTURE_TAGS[tex]) + list(lighting_tags(q))
        dims = GENERAL_DIMENSIONS + (CHARACTER_DIMENSIONS if category == "character" else ())
        offsets = {d: 0.3 * np.sin(1.7 * k + 3.0 * q) for k, d in enumerate(dims)}
        scores = {d: float(np.clip(1.0 + 8.0 * q + offsets[d] * (d != "Overall"), 1.0, 10.0)) for d in dims}
        videos.append(SyntheticVideo(f"v{i:04d}", hue, tex, q, category, frames, comments, tags, scores))
    return videos


def pretrain_samples(videos, max_frames: int = 6, frame_size: int | None = None) -> list[PretrainSample]:
    out = []
    for v in videos:
        clip = sample_frames(v.frames, max_frames=max_frames, frame_size=frame_size)
        for c in v.comments:
            out.append(PretrainSample(v.video_id, clip, c, tag_text(v.tags)))
    return out


def scored_clips(videos, max_frames: int = 6, frame_size: int | None = None) -> list[ScoredClip]:
    return [
        ScoredClip(v.video_id, sample_frames(v.frames, max_frames=max_frames, frame_size=frame_size), dict(v.scores))
        for v in videos
    ]


def clip_of(video: SyntheticVideo, max_frames: int = 6) -> FrameClip:
    return sample_frames(video.frames, max_frames=max_frames)


def annotate(videos, seed: int = 0, score_raters: int = 10, tag_raters: int = 3, noise: float = 0.8) -> list[AnnotationRecord]:
    """Simulated annotator records: noisy integer scores, comments, tag choices."""
    rng = np.random.default_rng(seed)
    records = []
    for v in videos:
        for r in range(score_raters):
            scores = {d: int(np.clip(np.rint(s + rng.normal(0, noise)), 1, 10)) for d, s in v.scores.items()}
            comment = v.comments[r % len(v.comments)] if r < len(v.comments) else (
                f"{quality_word(v.quality)} {v.hue} look rater{r}"
            )
            records.append(AnnotationRecord(v.video_id, f"s{r:02d}", scores, comment, None))
        for r in range(tag_raters):
            chosen = set(v.tags)
            if rng.random() < 0.3:
                chosen.add(str(rng.choice(["crane", "orbit", "golden_ratio", "rim_light"])))
            records.append(AnnotationRecord(v.video_id, f"t{r:02d}", {}, None, frozenset(chosen)))
    return records


def write_dataset(root, videos, records: list[AnnotationRecord]) -> Path:
    """Lay out a data root: ``annotations.jsonl`` plus ``frames/<video_id>.npz``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_annotations(root / "annotations.jsonl", records)
    for v in videos:
        save_packed_frames(root / "frames", v.video_id, v.frames)
    return root
