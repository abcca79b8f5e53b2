"""Dynamic fusion of comment and tag embeddings, temperature and the contrastive loss."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

MAX_LOG_SCALE = math.log(1000.0)


class DynamicFusion(nn.Module):
    """Gate ``alpha`` mixing comment and tag features.

    ``alpha = softmax(out(tanh(hidden(f_comm + f_tag))) + logit_bias)[0]``.
    The gate consumes the elementwise sum of the two embeddings; concatenating
    them would also work but doubles the hidden layer's input width.

    The output layer starts at zero, so the first forward pass returns the
    bias-only gate: ``alpha = alpha_init`` by default, or
    ``softmax(0.7, 0.3)[0] ~ 0.599`` with ``raw_biases=True``.
    """

    def __init__(self, embed_dim: int, hidden: int = 64, alpha_init: float = 0.7, raw_biases: bool = False):
        super().__init__()
        self.embed_dim = embed_dim
        self.hidden = nn.Linear(embed_dim, hidden)
        self.out = nn.Linear(hidden, 2)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)
        if raw_biases:
            bias = torch.tensor([0.7, 0.3])
        else:
            if not 0.0 < alpha_init < 1.0:
                raise ValueError("alpha_init must lie in (0, 1)")
            bias = torch.tensor([math.log(alpha_init), math.log(1.0 - alpha_init)])
        self.logit_bias = nn.Parameter(bias)

    def gate(self, f_comm: torch.Tensor, f_tag: torch.Tensor) -> torch.Tensor:
        if f_comm.shape != f_tag.shape or f_comm.shape[-1] != self.embed_dim:
            raise ValueError(f"fusion inputs must both be [..., {self.embed_dim}]")
        logits = self.out(torch.tanh(self.hidden(f_comm + f_tag))) + self.logit_bias
        return logits.softmax(-1)[..., 0]

    def forward(self, f_comm: torch.Tensor, f_tag: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        alpha = self.gate(f_comm, f_tag)
        a = alpha.unsqueeze(-1)
        fused = a * f_comm + (1.0 - a) * f_tag
        return F.normalize(fused, dim=-1), alpha


class Temperature(nn.Module):
    """Learnable logit scale stored as its log; the scale is capped at 1000.

    The scalar is kept in float64 whatever the model dtype, so ``exp(log_scale)`` starts at the
    requested scale to double precision; as a 0-dim tensor it does not promote the similarity matrix.
    """

    def __init__(self, init_scale: float = 100.0):
        super().__init__()
        self.log_scale = nn.Parameter(torch.tensor(math.log(init_scale), dtype=torch.float64))

    def forward(self) -> torch.Tensor:
        return self.log_scale.clamp(max=MAX_LOG_SCALE).exp()


def similarity_matrix(text_feats: torch.Tensor, video_feats: torch.Tensor, scale, tol: float = 1e-3) -> torch.Tensor:
    """``S[i, j] = scale * <text_i, video_j>`` for unit-norm rows."""
    for name, feats in (("text", text_feats), ("video", video_feats)):
        norms = feats.detach().norm(dim=-1)
        if torch.any((norms - 1).abs() > tol):
            raise ValueError(f"{name} features are not unit-norm")
    if text_feats.shape[-1] != video_feats.shape[-1]:
        raise ValueError("feature dimensions differ")
    return scale * text_feats @ video_feats.T


def symmetric_contrastive_loss(sim: torch.Tensor) -> torch.Tensor:
    """Mean of text->video (rows) and video->text (columns) cross-entropy."""
    if sim.dim() != 2 or sim.shape[0] != sim.shape[1] or sim.shape[0] < 1:
        raise ValueError("similarity matrix must be square and non-empty")
    # both directions go through the same row-wise kernel so loss(S) == loss(S.T) bitwise
    t2v = -sim.contiguous().log_softmax(dim=1).diagonal().mean()
    v2t = -sim.T.contiguous().log_softmax(dim=1).diagonal().mean()
    return (t2v + v2t) / 2
