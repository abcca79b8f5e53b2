"""Comment/tag text encoders and the temporally inflated video encoder."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass
class EncoderConfig:
    embed_dim: int = 64
    text_layers: int = 2
    vision_layers: int = 2
    heads: int = 2
    max_tokens: int = 32
    max_frames: int = 12
    frame_size: int = 32
    patch_size: int = 8
    temporal_kernel: int = 3
    vocab_size: int = 1028

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if self.max_tokens < 3:
            raise ValueError("max_tokens must be at least 3")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ValueError("temporal_kernel must be an odd positive integer")
        if self.frame_size % self.patch_size:
            raise ValueError("frame_size must be a multiple of patch_size")

    @classmethod
    def paper(cls, vocab_size: int = 49408) -> "EncoderConfig":
        """ViT-B/32 sized encoders (512-d, 12 layers, 224px frames, 32px patches)."""
        return cls(embed_dim=512, text_layers=12, vision_layers=12, heads=8,
                   frame_size=224, patch_size=32, vocab_size=vocab_size)


class ResidualAttentionBlock(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.ln_1 = nn.LayerNorm(width)
        self.qkv = nn.Linear(width, 3 * width)
        self.out_proj = nn.Linear(width, width)
        self.ln_2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(nn.Linear(width, 4 * width), nn.GELU(), nn.Linear(4 * width, width))

    def attention(self, x: torch.Tensor, allowed: torch.Tensor | None) -> torch.Tensor:
        b, n, w = x.shape
        q, k, v = self.qkv(x).view(b, n, 3, self.heads, w // self.heads).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(w // self.heads)
        if allowed is not None:
            scores = scores.masked_fill(~allowed[:, None], float("-inf"))
        out = scores.softmax(-1) @ v
        return self.out_proj(out.transpose(1, 2).reshape(b, n, w))

    def forward(self, x: torch.Tensor, allowed: torch.Tensor | None = None) -> torch.Tensor:
        x = x + self.attention(self.ln_1(x), allowed)
        return x + self.mlp(self.ln_2(x))


class Transformer(nn.Module):
    def __init__(self, width: int, layers: int, heads: int):
        super().__init__()
        self.blocks = nn.ModuleList(ResidualAttentionBlock(width, heads) for _ in range(layers))

    def forward(self, x, allowed=None):
        for block in self.blocks:
            x = block(x, allowed)
        return x


class TextEncoder(nn.Module):
    """Causal transformer over tokens; the end-token feature is projected and L2-normalised."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        w = config.embed_dim
        self.max_tokens = config.max_tokens
        self.token_embedding = nn.Embedding(config.vocab_size, w)
        self.positional_embedding = nn.Parameter(torch.empty(config.max_tokens, w))
        self.transformer = Transformer(w, config.text_layers, config.heads)
        self.ln_final = nn.LayerNorm(w)
        self.projection = nn.Parameter(torch.empty(w, config.embed_dim))
        nn.init.normal_(self.token_embedding.weight, std=0.02)
        nn.init.normal_(self.positional_embedding, std=0.01)
        nn.init.normal_(self.projection, std=w**-0.5)

    def features(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Un-normalised, un-projected end-token features ``[B, width]``."""
        lengths = mask.sum(-1)
        if ids.shape[-1] != self.max_tokens:
            raise ValueError(f"expected {self.max_tokens} tokens, got {ids.shape[-1]}")
        if torch.any(lengths < 2):
            raise ValueError("token sequence needs at least start and end tokens")
        n = ids.shape[-1]
        causal = torch.ones(n, n, dtype=torch.bool, device=ids.device).tril()
        allowed = causal[None] & mask.bool()[:, None, :]
        x = self.token_embedding(ids) + self.positional_embedding
        x = self.ln_final(self.transformer(x, allowed))
        return x[torch.arange(len(ids)), lengths - 1]

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.features(ids, mask) @ self.projection, dim=-1)


def inflate_patch_kernel(kernel2d: torch.Tensor, temporal_kernel: int) -> torch.Tensor:
    """``[D, 3, p, p]`` -> ``[D, 3, t, p, p]`` with the 2D kernel at the centre slice, zeros elsewhere."""
    if temporal_kernel < 1 or temporal_kernel % 2 == 0:
        raise ValueError("temporal kernel size must be odd")
    d, c, ph, pw = kernel2d.shape
    out = kernel2d.new_zeros(d, c, temporal_kernel, ph, pw)
    out[:, :, temporal_kernel // 2] = kernel2d
    return out


class VideoEncoder(nn.Module):
    """ViT over frames with a 3D patch embedding, masked mean over frames, projection, L2 norm."""

    def __init__(self, config: EncoderConfig, kernel2d: torch.Tensor | None = None):
        super().__init__()
        w, p, t = config.embed_dim, config.patch_size, config.temporal_kernel
        grid = config.frame_size // p
        self.max_frames = config.max_frames
        self.patch_embed = nn.Conv3d(3, w, kernel_size=(t, p, p), stride=(1, p, p), padding=(t // 2, 0, 0), bias=False)
        if kernel2d is None:
            kernel2d = torch.empty(w, 3, p, p)
            nn.init.kaiming_uniform_(kernel2d, a=math.sqrt(5))
        with torch.no_grad():
            self.patch_embed.weight.copy_(inflate_patch_kernel(kernel2d, t))
        scale = w**-0.5
        self.class_embedding = nn.Parameter(scale * torch.randn(w))
        self.positional_embedding = nn.Parameter(scale * torch.randn(grid * grid + 1, w))
        self.ln_pre = nn.LayerNorm(w)
        self.transformer = Transformer(w, config.vision_layers, config.heads)
        self.ln_post = nn.LayerNorm(w)
        self.projection = nn.Parameter(scale * torch.randn(w, config.embed_dim))

    def _trunk(self, patches: torch.Tensor) -> torch.Tensor:
        # patches: [M, width, g, g] -> class-token features [M, width]
        x = patches.flatten(2).transpose(1, 2)
        cls = self.class_embedding.expand(len(x), 1, -1)
        x = torch.cat([cls, x], dim=1) + self.positional_embedding
        x = self.transformer(self.ln_pre(x))
        return self.ln_post(x[:, 0])

    def frame_features(self, frames: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
        """Per-frame class-token features ``[B, T, width]``."""
        b, t = frames.shape[:2]
        # zero masked frames so their content cannot leak through the temporal kernel
        frames = frames * frame_mask.to(frames.dtype)[:, :, None, None, None]
        x = self.patch_embed(frames.transpose(1, 2))  # [B, W, T, g, g]
        x = x.transpose(1, 2).flatten(0, 1)
        return self._trunk(x).view(b, t, -1)

    def pooled(self, frames: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
        if frames.dim() != 5:
            raise ValueError("expected frames of shape [B, T, 3, H, W]")
        counts = frame_mask.sum(-1)
        if torch.any(counts < 1):
            raise ValueError("every clip needs at least one unmasked frame")
        feats = self.frame_features(frames, frame_mask)
        m = frame_mask.to(feats.dtype)[:, :, None]
        return (feats * m).sum(1) / counts.to(feats.dtype)[:, None]

    def forward(self, frames: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.pooled(frames, frame_mask) @ self.projection, dim=-1)

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        """2D path: patchify ``[B, 3, H, W]`` with the centre temporal slice of the kernel."""
        w = self.patch_embed.weight
        kernel2d = w[:, :, w.shape[2] // 2]
        x = F.conv2d(images, kernel2d, stride=self.patch_embed.stride[1:])
        return F.normalize(self._trunk(x) @ self.projection, dim=-1)
