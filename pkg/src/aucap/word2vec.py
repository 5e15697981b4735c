"""Skip-gram word embeddings with negative sampling.

Single-threaded SGD over (center, context) pairs drawn with a dynamic window,
negatives sampled from the unigram distribution raised to 0.75. Training is
bit-deterministic under a fixed seed; the returned table is the input-side
embedding matrix covering the whole vocabulary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import embfile
from .errors import VocabularyError
from .text import Vocabulary

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Word2VecConfig:
    dim: int = 256
    window: int = 5
    negatives: int = 5
    epochs: int = 15
    learning_rate: float = 0.025
    seed: int = 0


@dataclass
class WordEmbeddingTable:
    """(V, dim) input embeddings aligned with vocabulary indices."""

    matrix: np.ndarray
    epoch_losses: list[float]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def vector(self, index: int) -> np.ndarray:
        return self.matrix[index]

    def save(self, path: str | Path) -> None:
        embfile.write_matrix(path, self.matrix)

    @classmethod
    def load(cls, path: str | Path, expected_dim: int | None = None) -> "WordEmbeddingTable":
        return cls(matrix=embfile.read_matrix(path, expected_dim=expected_dim), epoch_losses=[])


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def sgns_event_loss(w_in: np.ndarray, w_out: np.ndarray, center: int, context: int,
                    negatives: np.ndarray) -> float:
    """Negative-sampling loss of one training event.

    -ln sigmoid(u_o . v_c) - sum_k ln sigmoid(-u_k . v_c)
    """
    v = w_in[center]
    pos = _sigmoid(w_out[context] @ v)
    loss = -np.log(max(pos, 1e-300))
    for n in negatives:
        loss -= np.log(max(_sigmoid(-(w_out[n] @ v)), 1e-300))
    return float(loss)


def sgns_event_grads(w_in: np.ndarray, w_out: np.ndarray, center: int, context: int,
                     negatives: np.ndarray):
    """Gradients of :func:`sgns_event_loss` wrt the touched rows.

    Returns (g_center, {row_index: g_out_row}); duplicate negative rows
    accumulate.
    """
    v = w_in[center]
    g_center = np.zeros_like(v)
    g_out: dict[int, np.ndarray] = {}

    coeff = _sigmoid(w_out[context] @ v) - 1.0
    g_center += coeff * w_out[context]
    g_out[context] = coeff * v
    for n in negatives:
        coeff = _sigmoid(w_out[n] @ v)
        g_center += coeff * w_out[n]
        g = coeff * v
        if n in g_out:
            g_out[n] = g_out[n] + g
        else:
            g_out[n] = g
    return g_center, g_out


def _noise_distribution(counts: np.ndarray) -> np.ndarray:
    powered = counts.astype(np.float64) ** 0.75
    total = powered.sum()
    if total <= 0:
        raise VocabularyError("corpus has no tokens to build a sampling table from")
    return powered / total


def train_word2vec(corpus, vocab: Vocabulary, config: Word2VecConfig = Word2VecConfig()
                   ) -> WordEmbeddingTable:
    """Train skip-gram embeddings on tokenized captions.

    ``corpus`` is an iterable of token lists (``<sos>``/``<eos>`` included;
    they receive embeddings like any other word). Deterministic for a fixed
    config seed.
    """
    sentences = [[vocab.index(t) for t in caption] for caption in corpus]
    if not sentences:
        raise VocabularyError("corpus is empty")
    v_size = len(vocab)
    counts = np.zeros(v_size, dtype=np.int64)
    for sent in sentences:
        for idx in sent:
            counts[idx] += 1
    noise = _noise_distribution(counts)
    cumulative = np.cumsum(noise)

    rng = np.random.RandomState(config.seed)
    w_in = rng.uniform(-0.5 / config.dim, 0.5 / config.dim, size=(v_size, config.dim))
    w_out = np.zeros((v_size, config.dim))

    lr = config.learning_rate
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        total, events = 0.0, 0
        for sent in sentences:
            for i, center in enumerate(sent):
                reach = rng.randint(1, config.window + 1)
                for j in range(max(0, i - reach), min(len(sent), i + reach + 1)):
                    if j == i:
                        continue
                    context = sent[j]
                    draws = np.searchsorted(cumulative, rng.random_sample(config.negatives))
                    negatives = draws[draws != context]
                    total += sgns_event_loss(w_in, w_out, center, context, negatives)
                    events += 1
                    g_center, g_out = sgns_event_grads(w_in, w_out, center, context, negatives)
                    w_in[center] -= lr * g_center
                    for row, g in g_out.items():
                        w_out[row] -= lr * g
        epoch_losses.append(total / max(events, 1))
        log.debug("word2vec epoch %d loss %.4f", epoch + 1, epoch_losses[-1])
    return WordEmbeddingTable(matrix=w_in, epoch_losses=epoch_losses)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))
