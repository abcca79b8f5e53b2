"""Frequency-ranked whitespace tokenizer.

The vocabulary file is plain text, one token per line, line number == id,
reserved tokens first::

    <pad>
    <start>
    <end>
    <unk>
    light
    ...
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch

PAD, START, END, UNK = "<pad>", "<start>", "<end>", "<unk>"
RESERVED = (PAD, START, END, UNK)
PAD_ID, START_ID, END_ID, UNK_ID = range(4)


def split_words(text: str) -> list[str]:
    return text.lower().split()


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.writelines(t + "\n" for t in self.tokens)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh])


def build_vocab(corpus: Iterable[str], max_size: int) -> Vocabulary:
    """Keep the ``max_size`` most frequent words; ties broken lexicographically."""
    counts = Counter(w for text in corpus for w in split_words(text))
    for tok in RESERVED:
        counts.pop(tok, None)
    ranked = sorted(counts, key=lambda w: (-counts[w], w))[:max_size]
    return Vocabulary(list(RESERVED) + ranked)


@dataclass
class TokenSequence:
    ids: np.ndarray  # int64 [max_tokens]
    mask: np.ndarray  # int64 [max_tokens], prefix of ones


def tokenize(text: str, vocab: Vocabulary, max_tokens: int = 32) -> TokenSequence:
    if max_tokens < 3:
        raise ValueError("max_tokens must leave room for start, one word and end")
    words = [vocab.id(w) for w in split_words(text)][: max_tokens - 2]
    seq = [START_ID] + words + [END_ID]
    ids = np.full(max_tokens, PAD_ID, dtype=np.int64)
    mask = np.zeros(max_tokens, dtype=np.int64)
    ids[: len(seq)] = seq
    mask[: len(seq)] = 1
    return TokenSequence(ids, mask)


def tokenize_batch(texts: Sequence[str], vocab: Vocabulary, max_tokens: int = 32) -> tuple[torch.Tensor, torch.Tensor]:
    seqs = [tokenize(t, vocab, max_tokens) for t in texts]
    ids = torch.from_numpy(np.stack([s.ids for s in seqs])) if seqs else torch.zeros(0, max_tokens, dtype=torch.long)
    mask = torch.from_numpy(np.stack([s.mask for s in seqs])) if seqs else torch.zeros(0, max_tokens, dtype=torch.long)
    return ids, mask


def tag_text(tags: Iterable[str]) -> str:
    """Render a tag multiset as encoder input, e.g. ``"rule of thirds side light"``."""
    return " ".join(t.replace("_", " ") for t in sorted(set(tags)))
