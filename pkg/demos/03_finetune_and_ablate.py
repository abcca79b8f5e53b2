"""Score regression on a frozen encoder, and the two ablations against it."""

# %%
import torch

from vadbnet.ablation import run_ablation
from vadbnet.encoders import EncoderConfig
from vadbnet.model import build_model
from vadbnet.report import EvaluationSettings
from vadbnet.synthetic import make_videos, pretrain_samples, scored_clips
from vadbnet.text import build_vocab
from vadbnet.training import FinetuneConfig, PretrainConfig, pretrain

torch.set_num_threads(1)

enc = EncoderConfig(embed_dim=64, text_layers=2, vision_layers=2, heads=2, max_tokens=16, max_frames=4,
                    frame_size=32, patch_size=8, vocab_size=128)

# %%
# pretrain once; the untouched copy of the same initialisation is the "no pretraining" encoder
samples = pretrain_samples(make_videos(32, seed=0, n_frames=4, size=32), max_frames=4)
vocab = build_vocab([s.comment for s in samples] + [s.tags for s in samples], enc.vocab_size - 4)
model = build_model(enc, seed=0)
cfg = PretrainConfig(lr=1e-3, backbone_lr_coef=1.0, batch_size=32, epochs=200, max_steps=200,
                     weight_decay=0.0, decay=1.0)
pretrained = pretrain(model, samples, vocab, cfg, seed=0).model.video
random_init = build_model(enc, seed=0).video

# %% [markdown]
# 64 scored clips, split 48 / 16. Only the heads train; the encoder stays bit-identical.

# %%
items = scored_clips(make_videos(64, seed=1, n_frames=4, size=32), max_frames=4)
train, val = items[:48], items[48:]
ft = FinetuneConfig(lr=3e-2, epochs=300)
fast = EvaluationSettings(bootstrap=300, permutations=500)

for which in ("no_pretrain", "linear_head"):
    result = run_ablation(which, pretrained, random_init, train, val, ft, fast)
    print(result.table())
    for arm in (result.full, result.ablated):
        h = arm.finetune.history
        print(f"{arm.arm.name:12s} train loss after 50 steps {h[49]['train_loss']:.3f}, "
              f"best val loss {arm.finetune.best_val_loss:.3f}")
    print()
