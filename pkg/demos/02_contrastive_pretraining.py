"""Contrastive pretraining of the video encoder against fused comment and tag text."""

# %%
import torch

from vadbnet.encoders import EncoderConfig
from vadbnet.frames import stack_clips
from vadbnet.model import build_model
from vadbnet.synthetic import make_videos, pretrain_samples
from vadbnet.text import build_vocab, tokenize_batch
from vadbnet.training import PretrainConfig, pretrain

torch.set_num_threads(1)

# %% [markdown]
# A laptop-sized encoder and 32 clips, each with one comment and a short tag list.

# %%
enc = EncoderConfig(embed_dim=64, text_layers=2, vision_layers=2, heads=2, max_tokens=16, max_frames=4,
                    frame_size=32, patch_size=8, vocab_size=128)
videos = make_videos(32, seed=0, n_frames=4, size=32)
samples = pretrain_samples(videos, max_frames=4)
vocab = build_vocab([s.comment for s in samples] + [s.tags for s in samples], enc.vocab_size - 4)
print(samples[0].comment, "|", samples[0].tags)

model = build_model(enc, seed=0)
print("initial temperature", model.temperature().item())

# %%
# a high learning rate and full batches so the run memorises its 32 pairs in a few seconds
cfg = PretrainConfig(lr=1e-3, backbone_lr_coef=1.0, batch_size=32, epochs=200, max_steps=200,
                     weight_decay=0.0, decay=1.0)
result = pretrain(model, samples, vocab, cfg, seed=0)
for r in result.log[::40] + result.log[-1:]:
    print(f"step {r['step']:3d}  loss {r['loss']:.4f}  alpha {r['alpha_mean']:.3f}  temp {r['temperature']:.1f}")

# %%
# retrieval on the training pairs: row i should pick video i, column i should pick text i
frames, fmask = stack_clips([s.clip for s in samples])
c = tokenize_batch([s.comment for s in samples], vocab, enc.max_tokens)
t = tokenize_batch([s.tags for s in samples], vocab, enc.max_tokens)
with torch.no_grad():
    _, sim, alpha = model(frames, fmask, *c, *t)
target = torch.arange(len(samples))
print("text->video R@1", (sim.argmax(1) == target).float().mean().item())
print("video->text R@1", (sim.argmax(0) == target).float().mean().item())
print("comment weight per sample", alpha[:6].numpy().round(3))
