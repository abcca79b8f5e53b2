"""Paired fine-tune + evaluate runs that differ in exactly one component."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .encoders import VideoEncoder
from .metrics import PairedSample
from .model import ScoreRegressor, parameter_hash
from .report import EvaluationSettings, MetricsReport, build_report, render_table
from .training import FinetuneConfig, FinetuneResult, ScoredClip, finetune, predict_scores

ABLATIONS = ("no_pretrain", "linear_head")
# the one FinetuneConfig field each ablation is allowed to change
ABLATED_FIELD = {"no_pretrain": "encoder_init", "linear_head": "head_kind"}


class ConfigDrift(ValueError):
    """Ablation arms differ in something other than the ablated component."""


@dataclass
class Arm:
    name: str
    encoder: VideoEncoder
    config: FinetuneConfig
    seed: int
    train: Sequence[ScoredClip]
    val: Sequence[ScoredClip]


@dataclass
class ArmResult:
    arm: Arm
    finetune: FinetuneResult
    report: MetricsReport
    train_report: MetricsReport
    encoder_hash: str


@dataclass
class AblationResult:
    which: str | None
    full: ArmResult
    ablated: ArmResult

    def table(self) -> str:
        return side_by_side(self.full, self.ablated)


def _split_ids(items: Sequence[ScoredClip]) -> list[str]:
    return [it.video_id for it in items]


def check_drift(a: Arm, b: Arm, which: str | None) -> None:
    problems = []
    if a.seed != b.seed:
        problems.append(f"seed {a.seed} != {b.seed}")
    if _split_ids(a.train) != _split_ids(b.train):
        problems.append("training splits differ")
    if _split_ids(a.val) != _split_ids(b.val):
        problems.append("validation splits differ")
    allowed = ABLATED_FIELD.get(which)
    for f in dataclasses.fields(FinetuneConfig):
        if f.name != allowed and getattr(a.config, f.name) != getattr(b.config, f.name):
            problems.append(f"finetune.{f.name} differs")
    if problems:
        raise ConfigDrift("; ".join(problems))


def evaluate_regressor(model: ScoreRegressor, items: Sequence[ScoredClip], settings: EvaluationSettings, meta: dict) -> MetricsReport:
    pred = predict_scores(model, items)
    samples = []
    for j, d in enumerate(model.dimensions):
        truth = np.array([it.targets.get(d, np.nan) for it in items])
        keep = ~np.isnan(truth)
        if keep.sum() >= 2:
            samples.append(PairedSample(pred[keep, j], truth[keep], d))
    return build_report(samples, settings, meta)


def build_regressor(encoder: VideoEncoder, config: FinetuneConfig, seed: int) -> ScoreRegressor:
    """Heads are drawn from ``seed`` so arm results do not depend on global RNG state."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return ScoreRegressor(encoder, config.dimensions, config.head_kind)


def run_arm(arm: Arm, settings: EvaluationSettings) -> ArmResult:
    model = build_regressor(arm.encoder, arm.config, arm.seed)
    result = finetune(model, arm.train, arm.val, arm.config, seed=arm.seed)
    meta = {"arm": arm.name}
    evaluated = arm.val if arm.val else arm.train
    return ArmResult(
        arm,
        result,
        evaluate_regressor(result.model, evaluated, settings, meta),
        evaluate_regressor(result.model, arm.train, settings, {**meta, "split": "train"}),
        parameter_hash(arm.encoder),
    )


def run_arms(full: Arm, ablated: Arm, settings: EvaluationSettings, which: str | None = None) -> AblationResult:
    check_drift(full, ablated, which)
    return AblationResult(which, run_arm(full, settings), run_arm(ablated, settings))


def run_ablation(
    which: str,
    pretrained: VideoEncoder,
    random_init: VideoEncoder,
    train: Sequence[ScoredClip],
    val: Sequence[ScoredClip],
    config: FinetuneConfig,
    settings: EvaluationSettings | None = None,
    seed: int = 0,
) -> AblationResult:
    """Full model (pretrained encoder, mlp3 heads) against one ablated arm.

    ``no_pretrain`` swaps in ``random_init``; ``linear_head`` swaps the heads.
    """
    if which not in ABLATIONS:
        raise ValueError(f"unknown ablation {which!r}; expected one of {ABLATIONS}")
    settings = settings or EvaluationSettings()
    full_cfg = dataclasses.replace(config, head_kind="mlp3", encoder_init="pretrained")
    full = Arm("full", pretrained, full_cfg, seed, train, val)
    if which == "no_pretrain":
        ablated = Arm(which, random_init, dataclasses.replace(full_cfg, encoder_init="random"), seed, train, val)
    else:
        ablated = Arm(which, pretrained, dataclasses.replace(full_cfg, head_kind="linear"), seed, train, val)
    return run_arms(full, ablated, settings, which)


def side_by_side(a: ArmResult, b: ArmResult) -> str:
    return f"== {a.arm.name} ==\n{render_table(a.report)}\n== {b.arm.name} ==\n{render_table(b.report)}"
