"""Skip-gram word embeddings with negative sampling, and document vectors.

Training runs on the compiled kernel when available. Randomness inside an
epoch comes from a 64-bit LCG seeded from ``seed``, so the compiled and
pure-Python kernels walk the same sample stream.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .. import _kernels
from .text import embedding_tokens


@dataclass
class EmbeddingModel:
    vocabulary: dict[str, int]
    vectors: np.ndarray
    training_window_id: str | None = None
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self.vocabulary

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.vocabulary[token]]

    def embed(self, text: str) -> np.ndarray:
        """Mean of in-vocabulary token vectors; zeros when none are known."""
        idx = [self.vocabulary[t] for t in embedding_tokens(text) if t in self.vocabulary]
        if not idx:
            return np.zeros(self.dim)
        return self.vectors[idx].mean(axis=0)

    def similarity(self, text_a: str, text_b: str) -> float:
        return cosine(self.embed(text_a), self.embed(text_b))


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _unigram_table(counts: np.ndarray, power: float = 0.75) -> np.ndarray:
    weights = counts.astype(np.float64) ** power
    cdf = np.cumsum(weights / weights.sum())
    size = int(min(1_000_000, max(10_000, 50 * len(counts))))
    points = (np.arange(size) + 0.5) / size
    return np.minimum(np.searchsorted(cdf, points), len(counts) - 1).astype(np.int32)


def train_embedding(texts: Sequence[str], dim: int = 100, window: int = 5, epochs: int = 5,
                    min_count: int = 2, negative: int = 5, sample: float = 1e-3,
                    alpha: float = 0.025, min_alpha: float = 1e-4, seed: int = 0,
                    window_id: str | None = None, kernels=None) -> EmbeddingModel:
    """Train a skip-gram model on ``texts``.

    Only training-period texts should be passed in. ``kernels`` selects a
    backend module explicitly (see :func:`changedeps._kernels.get_backend`).
    """
    if not texts:
        raise ValueError("no training texts")
    kernels = kernels or _kernels
    sentences = [embedding_tokens(t) for t in texts]
    counts = Counter(tok for s in sentences for tok in s)
    vocab_items = sorted(((tok, n) for tok, n in counts.items() if n >= min_count),
                         key=lambda x: (-x[1], x[0]))
    vocabulary = {tok: i for i, (tok, _) in enumerate(vocab_items)}
    params = dict(dim=dim, window=window, epochs=epochs, min_count=min_count,
                  negative=negative, sample=sample, alpha=alpha, seed=seed)
    rng = np.random.default_rng(seed)
    if not vocabulary:
        return EmbeddingModel({}, np.zeros((0, dim)), window_id, params)

    freq = np.array([n for _, n in vocab_items], dtype=np.float64)
    encoded = [[vocabulary[t] for t in s if t in vocabulary] for s in sentences]
    encoded = [s for s in encoded if len(s) > 1]
    tokens = np.fromiter((w for s in encoded for w in s), dtype=np.int32)
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    np.cumsum([len(s) for s in encoded], out=offsets[1:])
    total = int(freq.sum())
    if sample > 0:
        threshold = sample * total
        keep = (np.sqrt(freq / threshold) + 1.0) * threshold / freq
        keep = np.minimum(keep, 1.0)
    else:
        keep = np.ones_like(freq)

    syn0 = (rng.random((len(vocabulary), dim)) - 0.5) / dim
    syn1 = np.zeros((len(vocabulary), dim))
    table = _unigram_table(freq)
    state = int(rng.integers(0, 2**63))
    words_done = 0
    total_words = int(len(tokens)) * epochs
    if len(tokens):
        for _ in range(epochs):
            state, words_done = kernels.sgns_epoch(
                tokens, offsets, keep, syn0, syn1, table, int(window), int(negative),
                float(alpha), float(min_alpha), total_words, words_done, state)
    return EmbeddingModel(vocabulary, syn0, window_id, params)


def training_texts(changes: Iterable) -> list[str]:
    """The four first-patchset texts of each change, for embedding training."""
    from .text import change_texts

    out = []
    for c in changes:
        t = change_texts(c)
        out.extend([t["subject"], t["description"], t["added_lines"], t["deleted_lines"]])
    return [t for t in out if t]
