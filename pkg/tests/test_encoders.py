from collections import Counter

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from vadbnet.encoders import EncoderConfig, TextEncoder, VideoEncoder, inflate_patch_kernel
from vadbnet.frames import (
    PIXEL_MEAN,
    PIXEL_STD,
    load_clip,
    normalize_frames,
    sample_frames,
    save_packed_frames,
    uniform_indices,
)
from vadbnet.text import END_ID, PAD_ID, START_ID, UNK_ID, Vocabulary, build_vocab, tag_text, tokenize, tokenize_batch

from oracles import uniform_indices_oracle

CFG = EncoderConfig(embed_dim=32, text_layers=2, vision_layers=2, heads=2, max_tokens=16, max_frames=6,
                    frame_size=16, patch_size=8, temporal_kernel=3, vocab_size=64)


def seeded(cls, *args, seed=0):
    torch.manual_seed(seed)
    return cls(*args)


# ---------------------------------------------------------------- tokenizer


class TestVocab:
    def test_counts_and_reserved(self):
        v = build_vocab(["a a b"], 10)
        assert v.tokens == ["<pad>", "<start>", "<end>", "<unk>", "a", "b"]

    def test_identical_corpora(self):
        corpus = ["the light is soft", "soft light", "a pan shot"]
        assert build_vocab(corpus, 5) == build_vocab(list(corpus), 5)

    def test_tie_break_lexicographic(self):
        assert build_vocab(["zeta alpha mid"], 2).tokens[4:] == ["alpha", "mid"]

    def test_max_size_and_top_token(self):
        rng = np.random.default_rng(0)
        words = [f"w{i}" for i in range(400)]
        weights = 1.0 / np.arange(1, 401)
        corpus = [" ".join(rng.choice(words, size=12, p=weights / weights.sum())) for _ in range(1000)]
        v = build_vocab(corpus, 256)
        assert len(v) - 4 == 256
        counts = Counter(w for line in corpus for w in line.split())
        top = max(counts.items(), key=lambda kv: (kv[1], [-ord(c) for c in kv[0]]))[0]
        assert v.tokens[4] == top

    def test_save_load(self, tmp_path):
        v = build_vocab(["rule of thirds", "rim light"], 10)
        v.save(tmp_path / "vocab.txt")
        assert Vocabulary.load(tmp_path / "vocab.txt") == v
        assert (tmp_path / "vocab.txt").read_text().splitlines()[:4] == ["<pad>", "<start>", "<end>", "<unk>"]


class TestTokenize:
    vocab = build_vocab(["symmetric composition", "soft light"], 10)

    def test_empty(self):
        seq = tokenize("", self.vocab, 8)
        assert seq.ids.tolist() == [START_ID, END_ID] + [PAD_ID] * 6
        assert seq.mask.sum() == 2

    def test_truncation(self):
        seq = tokenize(" ".join(["light"] * 100), self.vocab, 32)
        assert seq.mask.sum() == 32
        assert seq.ids[31] == END_ID and seq.ids[0] == START_ID

    def test_lookup(self):
        seq = tokenize("Symmetric composition", self.vocab, 8)
        expected = [START_ID, self.vocab.index["symmetric"], self.vocab.index["composition"], END_ID]
        assert seq.ids[:4].tolist() == expected

    def test_unknown(self):
        assert tokenize("purple", self.vocab, 8).ids[1] == UNK_ID

    @given(st.lists(st.sampled_from(["soft", "light", "x", "symmetric"]), max_size=40), st.integers(3, 20))
    def test_layout_invariants(self, words, n):
        seq = tokenize(" ".join(words), self.vocab, n)
        k = int(seq.mask.sum())
        assert seq.mask[:k].all() and not seq.mask[k:].any()
        assert seq.ids[0] == START_ID and seq.ids[k - 1] == END_ID
        assert (seq.ids[k:] == PAD_ID).all()

    def test_batch(self):
        ids, mask = tokenize_batch(["soft", "soft light"], self.vocab, 6)
        assert ids.shape == mask.shape == (2, 6) and ids.dtype == torch.long

    def test_tag_text(self):
        assert tag_text(["side_light", "rule_of_thirds", "side_light"]) == "rule of thirds side light"


# ------------------------------------------------------------------- frames


class TestFrames:
    def test_identity_when_max(self):
        assert uniform_indices(12, 12) == list(range(12))

    def test_24_frames(self):
        idx = uniform_indices(24, 12)
        assert idx == uniform_indices_oracle(24, 12)
        assert idx == [0, 2, 4, 6, 8, 10, 13, 15, 17, 19, 21, 23]

    @given(st.integers(1, 400), st.integers(1, 16))
    def test_indices_match_oracle(self, count, m):
        idx = uniform_indices(count, m)
        assert idx == uniform_indices_oracle(count, m)
        assert len(idx) == min(count, m)
        assert idx == sorted(set(idx))
        if count > m > 1:
            assert idx[0] == 0 and idx[-1] == count - 1

    def test_padding(self):
        frames = np.zeros((5, 8, 8, 3), dtype=np.uint8)
        clip = sample_frames(frames, max_frames=12)
        assert clip.frame_mask.tolist() == [1] * 5 + [0] * 7
        assert clip.frames.shape == (12, 3, 8, 8)
        assert torch.all(clip.frames[5:] == 0)

    def test_decimation_by_timestamps(self):
        # 30 frames at 10 fps -> one frame per second at t = 0, 1, 2
        frames = np.zeros((30, 4, 4, 3), dtype=np.uint8)
        clip = sample_frames(frames, timestamps=np.arange(30) / 10.0, fps=1.0, max_frames=12)
        assert clip.indices == [0, 10, 20]

    def test_normalisation(self):
        frames = np.full((1, 4, 4, 3), 255, dtype=np.uint8)
        x = normalize_frames(frames)
        expected = (1.0 - torch.tensor(PIXEL_MEAN)) / torch.tensor(PIXEL_STD)
        assert torch.allclose(x[0, :, 0, 0], expected)

    def test_packed_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        frames = rng.integers(0, 256, (3, 8, 8, 3), dtype=np.uint8)
        save_packed_frames(tmp_path, "v1", frames)
        clip = load_clip(tmp_path, "v1", max_frames=4)
        assert torch.equal(clip.frames[:3], normalize_frames(frames))

    def test_image_directory(self, tmp_path):
        Image = pytest.importorskip("PIL.Image")
        rng = np.random.default_rng(1)
        frames = rng.integers(0, 256, (2, 8, 8, 3), dtype=np.uint8)
        (tmp_path / "v2").mkdir()
        for i, f in enumerate(frames):
            Image.fromarray(f).save(tmp_path / "v2" / f"{i:03d}.png")
        clip = load_clip(tmp_path, "v2", max_frames=4)
        assert torch.equal(clip.frames[:2], normalize_frames(frames))


# ------------------------------------------------------------ text encoders


def random_tokens(batch, seed=0, cfg=CFG):
    g = torch.Generator().manual_seed(seed)
    lengths = torch.randint(2, cfg.max_tokens + 1, (batch,), generator=g)
    ids = torch.randint(4, cfg.vocab_size, (batch, cfg.max_tokens), generator=g)
    mask = (torch.arange(cfg.max_tokens)[None] < lengths[:, None]).long()
    ids[:, 0] = START_ID
    ids[torch.arange(batch), lengths - 1] = END_ID
    ids = torch.where(mask.bool(), ids, torch.full_like(ids, PAD_ID))
    return ids, mask


class TestTextEncoder:
    def test_unit_norm(self):
        enc = seeded(TextEncoder, CFG)
        out = enc(*random_tokens(8))
        assert out.shape == (8, CFG.embed_dim)
        assert torch.allclose(out.norm(dim=-1), torch.ones(8), atol=1e-5)

    def test_disjoint_encoders(self):
        torch.manual_seed(0)
        comment, tag = TextEncoder(CFG), TextEncoder(CFG)
        assert not set(map(id, comment.parameters())) & set(map(id, tag.parameters()))
        ids, mask = random_tokens(4)
        cos = (comment(ids, mask) * tag(ids, mask)).sum(-1)
        assert torch.all(cos < 0.999)

    def test_pad_region_is_ignored(self):
        enc = seeded(TextEncoder, CFG)
        ids, mask = random_tokens(6, seed=1)
        noisy = torch.where(mask.bool(), ids, torch.randint(4, CFG.vocab_size, ids.shape))
        assert torch.allclose(enc(ids, mask), enc(noisy, mask), atol=1e-7, rtol=0)

    def test_all_pad_rejected(self):
        enc = seeded(TextEncoder, CFG)
        ids = torch.zeros(1, CFG.max_tokens, dtype=torch.long)
        with pytest.raises(ValueError):
            enc(ids, torch.zeros_like(ids))

    def test_deterministic(self):
        a, b = seeded(TextEncoder, CFG), seeded(TextEncoder, CFG)
        ids, mask = random_tokens(3)
        assert torch.equal(a(ids, mask), b(ids, mask))


# ------------------------------------------------------------ video encoder


class TestInflation:
    def test_t1(self):
        k = torch.randn(4, 3, 2, 2)
        assert torch.equal(inflate_patch_kernel(k, 1)[:, :, 0], k)

    def test_t3(self):
        k = torch.randn(4, 3, 2, 2)
        out = inflate_patch_kernel(k, 3)
        assert torch.equal(out[:, :, 1], k)
        assert not out[:, :, 0].any() and not out[:, :, 2].any()

    @pytest.mark.parametrize("t", [0, 2, 4])
    def test_even_rejected(self, t):
        with pytest.raises(ValueError):
            inflate_patch_kernel(torch.randn(1, 3, 2, 2), t)

    def test_conv3d_matches_per_frame_conv2d(self):
        torch.manual_seed(0)
        k2 = torch.randn(5, 3, 4, 4)
        clip = torch.randn(1, 3, 7, 8, 8)
        out3 = F.conv3d(clip, inflate_patch_kernel(k2, 3), stride=(1, 4, 4), padding=(1, 0, 0))
        for t in range(7):
            out2 = F.conv2d(clip[:, :, t], k2, stride=4)
            assert torch.allclose(out3[:, :, t], out2, atol=1e-6)


def identical_clip(image, t, max_frames):
    frames = torch.zeros(1, max_frames, *image.shape)
    frames[0, :t] = image
    mask = torch.zeros(1, max_frames, dtype=torch.long)
    mask[0, :t] = 1
    return frames, mask


class TestVideoEncoder:
    def test_shape_and_norm(self):
        enc = seeded(VideoEncoder, CFG).eval()
        frames = torch.randn(3, CFG.max_frames, 3, CFG.frame_size, CFG.frame_size)
        mask = torch.ones(3, CFG.max_frames, dtype=torch.long)
        out = enc(frames, mask)
        assert out.shape == (3, CFG.embed_dim)
        assert torch.allclose(out.norm(dim=-1), torch.ones(3), atol=1e-5)

    @pytest.mark.parametrize("t", [1, 2, 4, 6])
    def test_identical_frames_match_image_embedding(self, t):
        enc = seeded(VideoEncoder, CFG).eval()
        image = torch.randn(3, CFG.frame_size, CFG.frame_size)
        with torch.no_grad():
            video = enc(*identical_clip(image, t, CFG.max_frames))
            single = enc.encode_image(image[None])
        assert torch.allclose(video, single, atol=1e-6, rtol=0)

    def test_masked_frames_are_ignored(self):
        enc = seeded(VideoEncoder, CFG).eval()
        frames = torch.randn(2, CFG.max_frames, 3, CFG.frame_size, CFG.frame_size)
        mask = torch.tensor([[1, 1, 1, 0, 0, 0], [1, 1, 1, 1, 1, 0]])
        noisy = frames.clone()
        noisy[mask == 0] = torch.randn_like(noisy[mask == 0]) * 10
        with torch.no_grad():
            assert torch.allclose(enc(frames, mask), enc(noisy, mask), atol=1e-7, rtol=0)

    def test_no_frames_rejected(self):
        enc = seeded(VideoEncoder, CFG)
        frames = torch.randn(1, CFG.max_frames, 3, CFG.frame_size, CFG.frame_size)
        with pytest.raises(ValueError):
            enc(frames, torch.zeros(1, CFG.max_frames, dtype=torch.long))

    def test_patch_kernel_is_centre_inflated(self):
        k2 = torch.randn(CFG.embed_dim, 3, CFG.patch_size, CFG.patch_size)
        enc = VideoEncoder(CFG, kernel2d=k2)
        assert torch.equal(enc.patch_embed.weight, inflate_patch_kernel(k2, 3))


class TestConfig:
    def test_paper_shape(self):
        cfg = EncoderConfig.paper()
        assert (cfg.embed_dim, cfg.text_layers, cfg.vision_layers, cfg.max_tokens, cfg.max_frames) == (512, 12, 12, 32, 12)

    @pytest.mark.parametrize("kwargs", [{"embed_dim": 30, "heads": 4}, {"max_tokens": 2}, {"temporal_kernel": 2},
                                        {"frame_size": 30, "patch_size": 8}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            EncoderConfig(**kwargs)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**16))
def test_video_encoder_deterministic(seed):
    a, b = seeded(VideoEncoder, CFG, seed=seed).eval(), seeded(VideoEncoder, CFG, seed=seed).eval()
    x = torch.randn(1, CFG.max_frames, 3, CFG.frame_size, CFG.frame_size)
    m = torch.ones(1, CFG.max_frames, dtype=torch.long)
    with torch.no_grad():
        assert torch.equal(a(x, m), b(x, m))
