"""Pretraining network and the frozen-encoder score regressor."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .encoders import EncoderConfig, TextEncoder, VideoEncoder
from .fusion import DynamicFusion, Temperature, similarity_matrix, symmetric_contrastive_loss


@dataclass
class FusionConfig:
    hidden: int = 64
    alpha_init: float = 0.7
    # use the literal (0.7, 0.3) logit biases instead of biases giving alpha = alpha_init
    raw_biases: bool = False


class VADBNet(nn.Module):
    """Video encoder, comment encoder, tag encoder, fusion gate and temperature."""

    def __init__(self, encoder: EncoderConfig, fusion: FusionConfig | None = None):
        super().__init__()
        fusion = fusion or FusionConfig()
        self.encoder_config = encoder
        self.fusion_config = fusion
        self.video = VideoEncoder(encoder)
        self.comment = TextEncoder(encoder)
        self.tag = TextEncoder(encoder)
        self.fusion = DynamicFusion(encoder.embed_dim, fusion.hidden, fusion.alpha_init, fusion.raw_biases)
        self.temperature = Temperature()

    def backbone_modules(self) -> list[nn.Module]:
        return [self.video, self.comment, self.tag]

    def new_modules(self) -> list[nn.Module]:
        return [self.fusion, self.temperature]

    def encode_text(self, comment_ids, comment_mask, tag_ids, tag_mask):
        f_comm = self.comment(comment_ids, comment_mask)
        f_tag = self.tag(tag_ids, tag_mask)
        return self.fusion(f_comm, f_tag)

    def forward(self, frames, frame_mask, comment_ids, comment_mask, tag_ids, tag_mask):
        """Returns ``(loss, similarity, alpha)`` for a batch of aligned triplets."""
        text, alpha = self.encode_text(comment_ids, comment_mask, tag_ids, tag_mask)
        video = self.video(frames, frame_mask)
        sim = similarity_matrix(text, video, self.temperature())
        return symmetric_contrastive_loss(sim), sim, alpha


def build_model(encoder: EncoderConfig, fusion: FusionConfig | None = None, seed: int = 0) -> VADBNet:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return VADBNet(encoder, fusion)


def build_video_encoder(encoder: EncoderConfig, seed: int = 0) -> VideoEncoder:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return VideoEncoder(encoder)


HEAD_KINDS = ("mlp3", "linear")


def build_head(kind: str, input_dim: int) -> nn.Module:
    """``mlp3``: d -> d -> d/2 -> 1 with ReLU (512 -> 512 -> 256 -> 1 at full size); ``linear``: d -> 1."""
    if input_dim < 1:
        raise ValueError("input_dim must be positive")
    if kind == "mlp3":
        half = max(1, input_dim // 2)
        return nn.Sequential(
            nn.Linear(input_dim, input_dim), nn.ReLU(),
            nn.Linear(input_dim, half), nn.ReLU(),
            nn.Linear(half, 1),
        )
    if kind == "linear":
        return nn.Linear(input_dim, 1)
    raise ValueError(f"unknown head kind {kind!r}; expected one of {HEAD_KINDS}")


class ScoreRegressor(nn.Module):
    """Frozen video encoder with one independent regression head per scored dimension."""

    def __init__(self, encoder: VideoEncoder, dimensions, head_kind: str = "mlp3", embed_dim: int | None = None):
        super().__init__()
        self.encoder = encoder
        self.dimensions = tuple(dimensions)
        self.head_kind = head_kind
        d = embed_dim or encoder.projection.shape[1]
        self.heads = nn.ModuleDict({dim: build_head(head_kind, d) for dim in self.dimensions})
        self.freeze_encoder()

    def freeze_encoder(self) -> None:
        self.encoder.requires_grad_(False)
        self.encoder.eval()

    @torch.no_grad()
    def embed(self, frames, frame_mask) -> torch.Tensor:
        return self.encoder(frames, frame_mask)

    def predict_features(self, feats: torch.Tensor) -> torch.Tensor:
        """``[B, embed_dim]`` -> ``[B, len(dimensions)]`` raw scores."""
        return torch.cat([self.heads[d](feats) for d in self.dimensions], dim=1)

    def forward(self, frames, frame_mask) -> torch.Tensor:
        return self.predict_features(self.embed(frames, frame_mask))


def parameter_hash(module: nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(tensor.detach().cpu().numpy()).tobytes())
    return h.hexdigest()[:16]
