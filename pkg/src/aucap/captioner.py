"""GRU encoder-decoder captioning model.

Audio branch: BiGRU -> batch norm -> BiGRU -> batch norm (final state).
Text branch: embedding -> GRU -> batch norm (final state over the partial
caption). The two states are concatenated and decoded by one GRU step, a
dense layer and a softmax over the vocabulary. Training is teacher-forced:
each caption of N tokens contributes N-1 (prefix -> next word) examples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio.embeddings import VARIANT_DIMS
from .errors import CheckpointError, ShapeError
from .nn.checkpoint import load_tensors, save_tensors
from .nn.layers import BatchNorm, BiGRU, Dense, Embedding, GRU
from .nn import tensor as T
from .nn.optim import AdamState, adam_step
from .nn.tensor import Parameter, Tensor
from .text import SOS, Vocabulary, encode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CaptionerConfig:
    variant: str = "panns"
    sve_dim: int = 0              # K; 0 disables the SVE input
    audio_dim: int | None = None  # defaults to the variant's feature width
    bigru1: int = 32
    bigru2: int = 64
    text_gru: int = 128
    decoder_gru: int = 128
    embed_dim: int = 256
    dropout: float = 0.5
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 64
    max_len: int = 22
    seed: int = 0

    @property
    def feature_dim(self) -> int:
        return self.audio_dim if self.audio_dim is not None else VARIANT_DIMS[self.variant]

    @property
    def encoder_input_dim(self) -> int:
        return self.feature_dim + self.sve_dim

    @property
    def fused_dim(self) -> int:
        return 2 * self.bigru2 + self.text_gru

    def to_dict(self) -> dict:
        return {
            "variant": self.variant, "sve_dim": self.sve_dim, "audio_dim": self.audio_dim,
            "bigru1": self.bigru1, "bigru2": self.bigru2, "text_gru": self.text_gru,
            "decoder_gru": self.decoder_gru, "embed_dim": self.embed_dim,
            "dropout": self.dropout, "learning_rate": self.learning_rate,
            "epochs": self.epochs, "batch_size": self.batch_size,
            "max_len": self.max_len, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CaptionerConfig":
        return cls(**data)


def build_encoder_input(audio, sve: np.ndarray | None, variant: str) -> np.ndarray:
    """Combine audio features with the SVE vector into a (T', d) sequence.

    panns: the single clip vector and the SVE vector concatenate into a
    length-1 sequence. logmel/vggish: the SVE vector is tiled onto every
    frame. ``sve=None`` leaves the features unchanged (no-SVE ablation).
    """
    if variant not in VARIANT_DIMS:
        raise ValueError(f"unknown variant {variant!r}")
    values = getattr(audio, "values", audio)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"audio features must be 1-D or 2-D, got shape {arr.shape}")
    if variant == "panns" and arr.shape[0] != 1:
        raise ShapeError(f"panns features are one vector per clip, got {arr.shape[0]} rows")
    if sve is None:
        return arr.copy()
    sve = np.asarray(sve, dtype=np.float64).reshape(-1)
    tiled = np.tile(sve, (arr.shape[0], 1))
    return np.hstack([arr, tiled])


def prefix_examples(indices: list[int]) -> list[tuple[tuple[int, ...], int]]:
    """Teacher-forcing pairs: every proper prefix predicts the next token."""
    if len(indices) < 2:
        raise ShapeError("caption must hold at least <sos> and one more token")
    return [(tuple(indices[:i]), indices[i]) for i in range(1, len(indices))]


class Captioner:
    def __init__(self, vocab_size: int, config: CaptionerConfig,
                 rng: np.random.RandomState, embed_init: np.ndarray | None = None):
        if vocab_size < 5:
            raise ShapeError("vocabulary must hold the reserved tokens plus at least one word")
        self.config = config
        self.vocab_size = vocab_size
        c = config
        in_dim = c.encoder_input_dim
        self.audio_gru1 = BiGRU(in_dim, c.bigru1, rng, name="enc.audio1")
        self.bn_audio1 = BatchNorm(2 * c.bigru1, name="enc.bn_audio1")
        self.audio_gru2 = BiGRU(2 * c.bigru1, c.bigru2, rng, name="enc.audio2")
        self.bn_audio2 = BatchNorm(2 * c.bigru2, name="enc.bn_audio2")
        self.embedding = Embedding(vocab_size, c.embed_dim, rng, init=embed_init,
                                   name="enc.embedding")
        self.text_gru = GRU(c.embed_dim, c.text_gru, rng, name="enc.text")
        self.bn_text = BatchNorm(c.text_gru, name="enc.bn_text")
        self.decoder_gru = GRU(c.fused_dim, c.decoder_gru, rng, name="dec.gru")
        self.bn_decoder = BatchNorm(c.decoder_gru, name="dec.bn")
        self.out = Dense(c.decoder_gru, vocab_size, rng, name="dec.out")

    # -- plumbing -----------------------------------------------------------

    def parameters(self) -> list[Parameter]:
        out = []
        for part in (self.audio_gru1, self.bn_audio1, self.audio_gru2, self.bn_audio2,
                     self.embedding, self.text_gru, self.bn_text,
                     self.decoder_gru, self.bn_decoder, self.out):
            out.extend(part.parameters())
        return out

    def _batch_norms(self) -> list[BatchNorm]:
        return [self.bn_audio1, self.bn_audio2, self.bn_text, self.bn_decoder]

    def buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for bn in self._batch_norms():
            out.update(bn.buffers())
        return out

    def state(self) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
        return ({p.name: p.data.copy() for p in self.parameters()},
                {k: v.copy() for k, v in self.buffers().items()})

    def load_state(self, params: dict[str, np.ndarray], buffers: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in params:
                raise CheckpointError(f"missing parameter {p.name!r}")
            if params[p.name].shape != p.data.shape:
                raise CheckpointError(f"shape mismatch for {p.name!r}")
            p.data = np.array(params[p.name], dtype=np.float64)
        for bn in self._batch_norms():
            bn.load_buffers(buffers)

    # -- forward ------------------------------------------------------------

    def _bn_steps(self, bn: BatchNorm, steps: list[Tensor], mode: str,
                  update_running: bool) -> list[Tensor]:
        batch = steps[0].data.shape[0]
        stacked = T.concat(steps, axis=0)
        normed = bn(stacked, mode=mode, update_running=update_running)
        return [T.row_slice(normed, t * batch, (t + 1) * batch) for t in range(len(steps))]

    def encode(self, audio: np.ndarray, prefix: np.ndarray, mask: np.ndarray, mode: str,
               rng: np.random.RandomState | None = None, update_running: bool = True) -> Tensor:
        """Fused (batch, 2*bigru2 + text_gru) representation of audio + partial caption."""
        audio = np.asarray(audio, dtype=np.float64)
        prefix = np.asarray(prefix, dtype=np.int64)
        mask = np.asarray(mask, dtype=np.float64)
        if audio.ndim != 3 or audio.shape[2] != self.config.encoder_input_dim:
            raise ShapeError(
                f"audio batch must be (B, T, {self.config.encoder_input_dim}), got {audio.shape}"
            )
        if prefix.ndim != 2 or prefix.shape != mask.shape or prefix.shape[0] != audio.shape[0]:
            raise ShapeError(f"prefix {prefix.shape} / mask {mask.shape} / batch {audio.shape[0]}")
        drop = self.config.dropout
        if mode == "train" and drop > 0.0 and rng is None:
            raise ValueError("train-mode encode needs an rng for dropout")

        audio_steps = [Tensor(audio[:, t, :]) for t in range(audio.shape[1])]
        if mode == "train" and drop > 0.0:
            audio_steps = [T.dropout(s, drop, mode, rng) for s in audio_steps]
        seq1 = self.audio_gru1.run(audio_steps, return_sequence=True)
        seq1 = self._bn_steps(self.bn_audio1, seq1, mode, update_running)
        audio_vec = self.audio_gru2.run(seq1, return_sequence=False)
        audio_vec = self.bn_audio2(audio_vec, mode=mode, update_running=update_running)

        text_steps = [self.embedding(prefix[:, t]) for t in range(prefix.shape[1])]
        if mode == "train" and drop > 0.0:
            text_steps = [T.dropout(s, drop, mode, rng) for s in text_steps]
        masks = [mask[:, t] for t in range(mask.shape[1])]
        text_vec = self.text_gru.run(text_steps, masks=masks, return_sequence=False)
        text_vec = self.bn_text(text_vec, mode=mode, update_running=update_running)

        return T.concat([audio_vec, text_vec], axis=1)

    def decode_step(self, fused: Tensor, mode: str, update_running: bool = True) -> Tensor:
        """Next-word distribution over the vocabulary; rows sum to 1."""
        h = self.decoder_gru.run([fused], return_sequence=False)
        h = self.bn_decoder(h, mode=mode, update_running=update_running)
        return T.softmax(self.out(h))

    def forward(self, audio, prefix, mask, mode: str, rng=None,
                update_running: bool = True) -> Tensor:
        fused = self.encode(audio, prefix, mask, mode, rng=rng, update_running=update_running)
        return self.decode_step(fused, mode, update_running=update_running)

    # -- inference ----------------------------------------------------------

    def greedy_decode(self, encoder_input: np.ndarray, vocab: Vocabulary,
                      max_len: int | None = None) -> list[str]:
        """Argmax decoding from ``<sos>`` until ``<eos>`` or the length cap.

        Ties break toward the lowest vocabulary index (argmax semantics).
        """
        max_len = max_len if max_len is not None else self.config.max_len
        arr = np.asarray(encoder_input, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        tokens = [vocab.sos_index]
        while len(tokens) < max_len:
            prefix = np.array([tokens], dtype=np.int64)
            mask = np.ones_like(prefix, dtype=np.float64)
            probs = self.forward(arr, prefix, mask, mode="infer")
            nxt = int(np.argmax(probs.data[0]))
            tokens.append(nxt)
            if nxt == vocab.eos_index:
                break
        return [vocab.word(i) for i in tokens]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass
class CaptionerCheckpoint:
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    config: CaptionerConfig
    vocab_size: int
    vocab_sha256: str
    corpus_sha256: str = ""
    history: dict = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        tensors = {**self.params, **{f"buffer.{k}": v for k, v in self.buffers.items()}}
        meta = {
            "kind": "captioner",
            "config": self.config.to_dict(),
            "vocab_size": self.vocab_size,
            "vocab_sha256": self.vocab_sha256,
            "corpus_sha256": self.corpus_sha256,
            "history": self.history,
        }
        save_tensors(path, tensors, meta)

    @classmethod
    def load(cls, path: str | Path, vocab: Vocabulary | None = None,
             corpus_sha256: str | None = None) -> "CaptionerCheckpoint":
        tensors, meta = load_tensors(path)
        if meta.get("kind") != "captioner":
            raise CheckpointError(f"{path}: not a captioner checkpoint")
        ckpt = cls(
            params={k: v for k, v in tensors.items() if not k.startswith("buffer.")},
            buffers={k.removeprefix("buffer."): v for k, v in tensors.items()
                     if k.startswith("buffer.")},
            config=CaptionerConfig.from_dict(meta["config"]),
            vocab_size=meta["vocab_size"],
            vocab_sha256=meta["vocab_sha256"],
            corpus_sha256=meta.get("corpus_sha256", ""),
            history=meta.get("history", {}),
        )
        if vocab is not None and vocab.sha256() != ckpt.vocab_sha256:
            raise CheckpointError(f"{path}: vocabulary hash mismatch")
        if corpus_sha256 is not None and corpus_sha256 != ckpt.corpus_sha256:
            raise CheckpointError(f"{path}: subject-verb corpus hash mismatch")
        return ckpt

    def build_model(self) -> Captioner:
        model = Captioner(self.vocab_size, self.config,
                          np.random.RandomState(self.config.seed))
        model.load_state(self.params, self.buffers)
        return model


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class _Example:
    clip_id: str
    prefix: tuple[int, ...]
    target: int


def _build_examples(pairs, vocab: Vocabulary) -> list[_Example]:
    examples = []
    for clip_id, tokens in pairs:
        if tokens[0] != SOS:
            raise ShapeError(f"caption for {clip_id!r} does not start with {SOS}")
        indices = encode(tokens, vocab)
        for prefix, target in prefix_examples(indices):
            examples.append(_Example(clip_id, prefix, target))
    return examples


def _batch_arrays(examples: list[_Example], inputs: dict[str, np.ndarray]):
    audio = np.stack([inputs[e.clip_id] for e in examples])
    longest = max(len(e.prefix) for e in examples)
    prefix = np.zeros((len(examples), longest), dtype=np.int64)
    mask = np.zeros((len(examples), longest), dtype=np.float64)
    for row, e in enumerate(examples):
        prefix[row, : len(e.prefix)] = e.prefix
        mask[row, : len(e.prefix)] = 1.0
    targets = np.array([e.target for e in examples], dtype=np.int64)
    return audio, prefix, mask, targets


def _dataset_loss(model: Captioner, examples: list[_Example],
                  inputs: dict[str, np.ndarray], batch_size: int) -> float:
    total = 0.0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        audio, prefix, mask, targets = _batch_arrays(chunk, inputs)
        probs = model.forward(audio, prefix, mask, mode="infer")
        total += float(T.cross_entropy(probs, targets).data) * len(chunk)
    return total / len(examples)


def train_captioner(pairs, features: dict[str, np.ndarray],
                    sves: dict[str, np.ndarray] | None,
                    vocab: Vocabulary, config: CaptionerConfig,
                    val_pairs=None, embed_init: np.ndarray | None = None,
                    corpus_sha256: str = "",
                    stop_loss: float | None = None) -> tuple[CaptionerCheckpoint, dict]:
    """Teacher-forced training over (clip_id, caption tokens) pairs.

    ``features`` maps clip_id to its raw feature matrix for the configured
    variant; SVE vectors (when ``sve_dim > 0``) are concatenated per clip.
    Returns the best checkpoint by validation loss (training loss when no
    validation pairs are given) and the loss history. ``stop_loss`` ends
    training early once the epoch training loss drops below it.
    """
    pairs = list(pairs)
    if not pairs:
        raise ShapeError("training set is empty")
    if config.sve_dim > 0 and sves is None:
        raise ShapeError("config.sve_dim > 0 but no SVE vectors were given")

    inputs: dict[str, np.ndarray] = {}
    for clip_id, _ in pairs + list(val_pairs or []):
        if clip_id in inputs:
            continue
        if clip_id not in features:
            raise ShapeError(f"no features for clip {clip_id!r}")
        sve = sves[clip_id] if config.sve_dim > 0 else None
        enc = build_encoder_input(features[clip_id], sve, config.variant)
        if enc.shape[1] != config.encoder_input_dim:
            raise ShapeError(
                f"clip {clip_id!r}: encoder input width {enc.shape[1]} != "
                f"{config.encoder_input_dim}"
            )
        inputs[clip_id] = enc
    lengths = {v.shape[0] for v in inputs.values()}
    if len(lengths) != 1:
        raise ShapeError(f"clips disagree on sequence length: {sorted(lengths)}")

    rng = np.random.RandomState(config.seed)
    model = Captioner(len(vocab), config, rng, embed_init=embed_init)
    params = model.parameters()
    state = AdamState(learning_rate=config.learning_rate)

    examples = _build_examples(pairs, vocab)
    val_examples = _build_examples(val_pairs, vocab) if val_pairs else None
    history: dict = {"train_loss": [], "val_loss": [], "best_epoch": -1}
    best_loss = np.inf
    best_state = model.state()

    n = len(examples)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        batches = [order[s : s + config.batch_size].tolist()
                   for s in range(0, n, config.batch_size)]
        if len(batches) > 1 and len(batches[-1]) == 1:
            batches[-2].extend(batches.pop())  # train-mode batch norm needs >= 2 rows
        total = 0.0
        for batch_idx in batches:
            chunk = [examples[i] for i in batch_idx]
            audio, prefix, mask, targets = _batch_arrays(chunk, inputs)
            probs = model.forward(audio, prefix, mask, mode="train", rng=rng)
            loss = T.cross_entropy(probs, targets)
            T.backward(loss)
            adam_step(params, state)
            total += float(loss.data) * len(chunk)
        train_loss = total / n
        history["train_loss"].append(train_loss)
        if val_examples:
            watched = _dataset_loss(model, val_examples, inputs, config.batch_size)
            history["val_loss"].append(watched)
        else:
            watched = train_loss
        if watched < best_loss:
            best_loss = watched
            best_state = model.state()
            history["best_epoch"] = epoch
        log.info("captioner epoch %d/%d train %.4f watched %.4f",
                 epoch + 1, config.epochs, train_loss, watched)
        if stop_loss is not None and train_loss < stop_loss:
            log.info("captioner reached stop loss %.4g at epoch %d", stop_loss, epoch + 1)
            break

    best_params, best_buffers = best_state
    checkpoint = CaptionerCheckpoint(
        params=best_params, buffers=best_buffers, config=config,
        vocab_size=len(vocab), vocab_sha256=vocab.sha256(),
        corpus_sha256=corpus_sha256,
        history={"best_epoch": history["best_epoch"]},
    )
    return checkpoint, history
