"""Contrastive pretraining and frozen-encoder score regression."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .frames import FrameClip, stack_clips
from .model import ScoreRegressor, VADBNet, parameter_hash
from .text import Vocabulary, tokenize_batch

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, batch_ids: list[str], temperature: float, loss: float):
        super().__init__(
            f"non-finite loss {loss} at step {step} (temperature {temperature:.4g}, batch {batch_ids})"
        )
        self.step = step
        self.batch_ids = batch_ids
        self.temperature = temperature
        self.loss = loss

    def diagnostics(self) -> dict:
        return {"step": self.step, "batch_ids": self.batch_ids, "temperature": self.temperature, "loss": repr(self.loss)}


@dataclass
class PretrainConfig:
    lr: float = 1e-4
    warmup_fraction: float = 0.1
    decay: float = 0.9
    batch_size: int = 8
    epochs: int = 2
    grad_clip_norm: float = 1.0
    backbone_lr_coef: float = 1e-3
    weight_decay: float = 0.2
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    max_steps: int | None = None
    # listed by the reference configuration, not used by the loss
    margin: float | None = None
    hard_negative_rate: float | None = None


def lr_at_step(step: int, total_steps: int, config: PretrainConfig, steps_per_epoch: int | None = None) -> float:
    """Linear warmup to ``lr``, then ``lr * decay ** epoch``."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if steps_per_epoch is None:
        steps_per_epoch = max(1, math.ceil(total_steps / config.epochs))
    warmup = config.warmup_fraction * total_steps
    factor = min(1.0, step / warmup) if warmup > 0 else 1.0
    epoch = min(step // steps_per_epoch, max(config.epochs - 1, 0))
    return config.lr * factor * config.decay**epoch


@dataclass
class PretrainSample:
    video_id: str
    clip: FrameClip
    comment: str
    tags: str


def _param_groups(model: VADBNet, config: PretrainConfig) -> list[dict]:
    groups = []
    for role, modules, coef in (
        ("backbone", model.backbone_modules(), config.backbone_lr_coef),
        ("new", model.new_modules(), 1.0),
    ):
        decay, no_decay = [], []
        for m in modules:
            for p in m.parameters():
                (decay if p.dim() >= 2 else no_decay).append(p)
        for params, wd in ((decay, config.weight_decay), (no_decay, 0.0)):
            if params:
                groups.append({"params": params, "weight_decay": wd, "role": role, "lr_coef": coef})
    return groups


def _global_norm(params) -> float:
    grads = [p.grad.detach() for p in params if p.grad is not None]
    if not grads:
        return 0.0
    return float(torch.sqrt(sum((g.double() ** 2).sum() for g in grads)))


@dataclass
class PretrainResult:
    model: VADBNet
    log: list[dict]
    checkpoints: list[Path] = field(default_factory=list)


def pretrain(
    model: VADBNet,
    samples: Sequence[PretrainSample],
    vocab: Vocabulary,
    config: PretrainConfig,
    seed: int = 0,
    checkpoint_dir=None,
    log_path=None,
    config_hash: str = "",
) -> PretrainResult:
    """Symmetric contrastive training of all encoders, the fusion gate and the temperature."""
    if not samples:
        raise ValueError("pretraining set is empty")
    if config.margin is not None or config.hard_negative_rate is not None:
        logger.warning("margin / hard_negative_rate are accepted for compatibility and ignored by the loss")
    max_tokens = model.encoder_config.max_tokens
    steps_per_epoch = math.ceil(len(samples) / config.batch_size)
    total = steps_per_epoch * config.epochs
    if config.max_steps is not None:
        total = min(total, config.max_steps)

    groups = _param_groups(model, config)
    optimizer = torch.optim.AdamW(groups, lr=config.lr, betas=config.betas, eps=config.eps)
    params = [p for g in groups for p in g["params"]]
    gen = torch.Generator().manual_seed(seed)
    log: list[dict] = []
    checkpoints: list[Path] = []
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    model.train()
    step = 0
    try:
        for epoch in range(config.epochs):
            order = torch.randperm(len(samples), generator=gen).tolist()
            for start in range(0, len(order), config.batch_size):
                if step >= total:
                    break
                batch = [samples[i] for i in order[start:start + config.batch_size]]
                lr = lr_at_step(step, total, config, steps_per_epoch)
                for g in optimizer.param_groups:
                    g["lr"] = lr * g["lr_coef"]
                frames, fmask = stack_clips([s.clip for s in batch])
                c_ids, c_mask = tokenize_batch([s.comment for s in batch], vocab, max_tokens)
                t_ids, t_mask = tokenize_batch([s.tags for s in batch], vocab, max_tokens)
                frames = frames.to(next(model.parameters()).dtype)
                loss, _, alpha = model(frames, fmask, c_ids, c_mask, t_ids, t_mask)
                temperature = float(model.temperature().detach())
                if not torch.isfinite(loss):
                    raise TrainingDiverged(step, [s.video_id for s in batch], temperature, float(loss.detach()))
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                grad_norm = _global_norm(params)
                torch.nn.utils.clip_grad_norm_(params, config.grad_clip_norm)
                clipped = _global_norm(params)
                optimizer.step()
                record = {
                    "step": step,
                    "epoch": epoch,
                    "lr": lr,
                    "backbone_lr": next(g["lr"] for g in optimizer.param_groups if g["role"] == "backbone"),
                    "loss": float(loss.detach()),
                    "alpha_mean": float(alpha.detach().mean()),
                    "temperature": temperature,
                    "grad_norm": grad_norm,
                    "clipped_grad_norm": clipped,
                }
                log.append(record)
                if log_fh:
                    log_fh.write(json.dumps(record) + "\n")
                step += 1
            if checkpoint_dir is not None:
                checkpoints.append(save_checkpoint(
                    Path(checkpoint_dir) / f"pretrain_epoch{epoch + 1}.npz", model,
                    config_hash=config_hash, kind="pretrain", step=step, epoch=epoch + 1, optimizer=optimizer,
                ))
            if step >= total:
                break
    finally:
        if log_fh:
            log_fh.close()
    model.eval()
    return PretrainResult(model, log, checkpoints)


# ------------------------------------------------------------------ finetune


@dataclass
class FinetuneConfig:
    head_kind: str = "mlp3"
    encoder_init: str = "pretrained"  # or "random"
    lr: float = 1e-4
    train_batch: int = 128
    val_batch: int = 32
    epochs: int = 50
    max_steps: int | None = None
    dimensions: tuple[str, ...] = ("Overall",)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8


@dataclass
class ScoredClip:
    video_id: str
    clip: FrameClip
    targets: dict[str, float]


@dataclass
class FinetuneResult:
    model: ScoreRegressor
    history: list[dict]
    best_epoch: int
    best_val_loss: float
    steps: int
    encoder_hash_before: str
    encoder_hash_after: str


def targets_tensor(items: Sequence[ScoredClip], dimensions: Sequence[str]) -> torch.Tensor:
    return torch.tensor(
        [[it.targets.get(d, float("nan")) for d in dimensions] for it in items], dtype=torch.float64
    )


def masked_mse(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Per-head MSE over present targets, summed over heads."""
    present = ~torch.isnan(target)
    diff = torch.where(present, pred - torch.nan_to_num(target), torch.zeros_like(pred))
    counts = present.sum(0).clamp(min=1)
    return ((diff**2).sum(0) / counts).sum()


@torch.no_grad()
def embed_clips(encoder, items: Sequence[ScoredClip], batch_size: int = 32) -> torch.Tensor:
    encoder.eval()
    dtype = next(encoder.parameters()).dtype
    out = []
    for start in range(0, len(items), batch_size):
        frames, mask = stack_clips([it.clip for it in items[start:start + batch_size]])
        out.append(encoder(frames.to(dtype), mask))
    return torch.cat(out) if out else torch.zeros(0)


def finetune(
    model: ScoreRegressor,
    train: Sequence[ScoredClip],
    val: Sequence[ScoredClip],
    config: FinetuneConfig,
    seed: int = 0,
    log_path=None,
) -> FinetuneResult:
    """Train the regression heads with MSE; keeps the heads with the lowest validation loss."""
    if not train:
        raise ValueError("training split is empty")
    model.freeze_encoder()
    before = parameter_hash(model.encoder)
    dims = model.dimensions
    dtype = next(model.heads.parameters()).dtype
    x_train = embed_clips(model.encoder, train, config.val_batch).to(dtype)
    y_train = targets_tensor(train, dims).to(dtype)
    x_val = embed_clips(model.encoder, val, config.val_batch).to(dtype) if val else None
    y_val = targets_tensor(val, dims).to(dtype) if val else None

    optimizer = torch.optim.Adam(model.heads.parameters(), lr=config.lr, betas=config.betas, eps=config.eps)
    gen = torch.Generator().manual_seed(seed)
    history: list[dict] = []
    best = (math.inf, -1, copy.deepcopy(model.heads.state_dict()))
    step = 0
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(config.epochs):
            model.heads.train()
            order = torch.randperm(len(train), generator=gen)
            losses = []
            for start in range(0, len(order), config.train_batch):
                if config.max_steps is not None and step >= config.max_steps:
                    break
                idx = order[start:start + config.train_batch]
                loss = masked_mse(model.predict_features(x_train[idx]), y_train[idx])
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                losses.append(float(loss.detach()))
                step += 1
            if not losses:
                break
            model.heads.eval()
            with torch.no_grad():
                train_loss = float(masked_mse(model.predict_features(x_train), y_train))
                if x_val is not None:
                    val_loss = float(masked_mse(model.predict_features(x_val), y_val))
                else:
                    val_loss = train_loss
            record = {"epoch": epoch, "step": step, "train_loss": train_loss, "val_loss": val_loss}
            history.append(record)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
            if val_loss < best[0]:
                best = (val_loss, epoch, copy.deepcopy(model.heads.state_dict()))
    finally:
        if log_fh:
            log_fh.close()
    model.heads.load_state_dict(best[2])
    model.heads.eval()
    after = parameter_hash(model.encoder)
    if after != before:
        raise RuntimeError("encoder parameters changed during fine-tuning")
    return FinetuneResult(model, history, best[1], best[0], step, before, after)


@torch.no_grad()
def predict_scores(model: ScoreRegressor, items: Sequence[ScoredClip] | Sequence[FrameClip], batch_size: int = 32) -> np.ndarray:
    """Raw (unclamped) predictions ``[N, len(dimensions)]``."""
    clips = [it.clip if isinstance(it, ScoredClip) else it for it in items]
    wrapped = [ScoredClip("", c, {}) for c in clips]
    feats = embed_clips(model.encoder, wrapped, batch_size)
    model.heads.eval()
    dtype = next(model.heads.parameters()).dtype
    return model.predict_features(feats.to(dtype)).double().numpy()
