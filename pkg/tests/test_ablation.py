import dataclasses

import pytest

from vadbnet.ablation import Arm, ConfigDrift, run_ablation, run_arms
from vadbnet.encoders import EncoderConfig
from vadbnet.model import build_video_encoder, parameter_hash
from vadbnet.report import EvaluationSettings, render_table
from vadbnet.synthetic import make_videos, scored_clips
from vadbnet.training import FinetuneConfig

TINY = EncoderConfig(embed_dim=16, text_layers=1, vision_layers=1, heads=2, max_tokens=12, max_frames=3,
                     frame_size=16, patch_size=8, temporal_kernel=3, vocab_size=64)
FAST = EvaluationSettings(bootstrap=50, permutations=50)
CFG = FinetuneConfig(epochs=3, lr=1e-2)


@pytest.fixture(scope="module")
def splits():
    clips = scored_clips(make_videos(10, seed=5, n_frames=3, size=16), max_frames=3)
    return clips[:8], clips[8:]


def test_identical_arms_give_identical_reports(splits):
    train, val = splits
    encoder = build_video_encoder(TINY, seed=0)
    arm = Arm("a", encoder, CFG, 3, train, val)
    result = run_arms(arm, dataclasses.replace(arm, name="b"), FAST)
    assert result.full.report.dumps() == result.ablated.report.dumps().replace('"arm": "b"', '"arm": "a"')
    assert render_table(result.full.report) == render_table(result.ablated.report)


def test_no_pretrain_uses_a_different_encoder(splits):
    train, val = splits
    pretrained, random_init = build_video_encoder(TINY, seed=0), build_video_encoder(TINY, seed=1)
    result = run_ablation("no_pretrain", pretrained, random_init, train, val, CFG, FAST)
    assert result.full.encoder_hash == parameter_hash(pretrained)
    assert result.ablated.encoder_hash == parameter_hash(random_init) != result.full.encoder_hash
    assert result.ablated.arm.config.encoder_init == "random"


def test_linear_head_arm(splits):
    train, val = splits
    enc = build_video_encoder(TINY, seed=0)
    result = run_ablation("linear_head", enc, enc, train, val, CFG, FAST)
    assert result.ablated.finetune.model.head_kind == "linear"
    assert result.full.finetune.model.head_kind == "mlp3"
    assert "== full ==" in result.table() and "== linear_head ==" in result.table()


@pytest.mark.parametrize("change", [
    {"seed": 4},
    {"config": dataclasses.replace(CFG, lr=0.5)},
    {"config": dataclasses.replace(CFG, head_kind="linear")},
])
def test_drift_rejected(splits, change):
    train, val = splits
    arm = Arm("a", build_video_encoder(TINY), CFG, 3, train, val)
    with pytest.raises(ConfigDrift):
        run_arms(arm, dataclasses.replace(arm, **change), FAST, which="no_pretrain")


def test_split_drift_rejected(splits):
    train, val = splits
    arm = Arm("a", build_video_encoder(TINY), CFG, 3, train, val)
    with pytest.raises(ConfigDrift):
        run_arms(arm, dataclasses.replace(arm, train=train[:-1]), FAST)


def test_unknown_ablation(splits):
    with pytest.raises(ValueError):
        run_ablation("no_heads", None, None, *splits, CFG)
