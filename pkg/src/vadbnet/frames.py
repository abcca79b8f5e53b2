"""Frame sampling, normalisation and on-disk frame formats.

Two frame sources are accepted per video:

* packed array file ``<root>/<video_id>.npz`` holding ``frames`` (uint8,
  ``[N, H, W, 3]``, RGB) and optionally ``timestamps`` (float64 seconds,
  ``[N]``);
* a directory ``<root>/<video_id>/`` of image files (png/jpg), sorted by
  filename, read as RGB.

Without timestamps, frame ``i`` is taken to be at ``i / source_fps`` seconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

# CLIP pixel statistics
PIXEL_MEAN = (0.48145466, 0.4578275, 0.40821073)
PIXEL_STD = (0.26862954, 0.26130258, 0.27577711)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass
class FrameClip:
    frames: torch.Tensor  # [max_frames, 3, H, W], zeros beyond the mask
    frame_mask: torch.Tensor  # [max_frames], prefix of ones
    indices: list[int]  # source frame indices that were kept

    @property
    def num_frames(self) -> int:
        return int(self.frame_mask.sum())


def uniform_indices(count: int, max_frames: int) -> list[int]:
    """Evenly spaced positions in ``range(count)``, rounded half up.

    Position ``k`` is ``floor(k * (count - 1) / (max_frames - 1) + 1/2)``, so
    the first and last frame are always kept.
    """
    if count <= max_frames:
        return list(range(count))
    if max_frames == 1:
        return [0]
    pos = np.arange(max_frames) * (count - 1) / (max_frames - 1)
    return [int(p) for p in np.floor(pos + 0.5)]


def decimate(timestamps, fps: float = 1.0) -> list[int]:
    """One frame per ``1/fps`` interval: the first frame at or after each tick."""
    ts = np.asarray(timestamps, dtype=np.float64)
    if ts.size == 0:
        return []
    if np.any(np.diff(ts) < 0):
        raise ValueError("timestamps must be non-decreasing")
    step = 1.0 / fps
    ticks = np.arange(ts[0], ts[-1] + 1e-9, step)
    picked = np.searchsorted(ts, ticks - 1e-9, side="left")
    return sorted(set(int(i) for i in picked if i < len(ts)))


def select_frame_indices(timestamps, fps: float = 1.0, max_frames: int = 12) -> list[int]:
    kept = decimate(timestamps, fps)
    return [kept[i] for i in uniform_indices(len(kept), max_frames)]


def normalize_frames(frames, frame_size: int | None = None) -> torch.Tensor:
    """uint8 ``[N, H, W, 3]`` (or float in [0, 1]) -> normalised float ``[N, 3, S, S]``."""
    x = torch.as_tensor(np.asarray(frames))
    if x.dtype == torch.uint8:
        x = x.float() / 255.0
    else:
        x = x.float()
    x = x.permute(0, 3, 1, 2)
    if frame_size is not None and x.shape[-2:] != (frame_size, frame_size):
        x = F.interpolate(x, size=(frame_size, frame_size), mode="bilinear", align_corners=False, antialias=True)
    mean = torch.tensor(PIXEL_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(PIXEL_STD).view(1, 3, 1, 1)
    return (x - mean) / std


def sample_frames(
    frames,
    timestamps=None,
    fps: float = 1.0,
    max_frames: int = 12,
    frame_size: int | None = None,
    source_fps: float = 1.0,
) -> FrameClip:
    """Decimate to ``fps``, keep at most ``max_frames`` uniformly spaced frames, pad the rest."""
    frames = np.asarray(frames)
    if len(frames) == 0:
        raise ValueError("video has no frames")
    if timestamps is None:
        timestamps = np.arange(len(frames)) / source_fps
    idx = select_frame_indices(timestamps, fps, max_frames)
    x = normalize_frames(frames[idx], frame_size)
    out = torch.zeros((max_frames,) + tuple(x.shape[1:]), dtype=x.dtype)
    out[: len(idx)] = x
    mask = torch.zeros(max_frames, dtype=torch.long)
    mask[: len(idx)] = 1
    return FrameClip(out, mask, idx)


def stack_clips(clips: list[FrameClip]) -> tuple[torch.Tensor, torch.Tensor]:
    return torch.stack([c.frames for c in clips]), torch.stack([c.frame_mask for c in clips])


def load_raw_frames(root, video_id: str) -> tuple[np.ndarray, np.ndarray | None]:
    root = Path(root)
    packed = root / f"{video_id}.npz"
    if packed.exists():
        with np.load(packed) as data:
            ts = data["timestamps"] if "timestamps" in data.files else None
            return data["frames"], ts
    folder = root / video_id
    if folder.is_dir():
        from PIL import Image

        files = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise FileNotFoundError(f"no frame images in {folder}")
        return np.stack([np.asarray(Image.open(p).convert("RGB")) for p in files]), None
    raise FileNotFoundError(f"no frames for {video_id} under {root}")


def save_packed_frames(root, video_id: str, frames: np.ndarray, timestamps=None) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    path = root / f"{video_id}.npz"
    arrays = {"frames": np.asarray(frames, dtype=np.uint8)}
    if timestamps is not None:
        arrays["timestamps"] = np.asarray(timestamps, dtype="<f8")
    np.savez(path, **arrays)
    return path


def load_clip(root, video_id: str, fps: float = 1.0, max_frames: int = 12, frame_size: int | None = None,
              source_fps: float = 1.0) -> FrameClip:
    frames, ts = load_raw_frames(root, video_id)
    return sample_frames(frames, ts, fps, max_frames, frame_size, source_fps)
