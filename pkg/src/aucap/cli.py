"""Command-line entry point.

Commands cover the pipeline end to end: extract-features, build-sve,
train-w2v, train-mlp, train-captioner, predict, evaluate, gradcheck. Flags
override values from an optional ``key = value`` config file; every run logs
its fully resolved configuration. Output directories are guarded by a lock
file so two runs cannot mutate the same cache or checkpoint concurrently.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import metrics
from .captioner import CaptionerCheckpoint, CaptionerConfig, build_encoder_input, train_captioner
from .audio.embeddings import VARIANT_DIMS
from .audio.features import FeatureConfig
from .errors import AucapError, ConfigError
from .mlp import MLP, MLPConfig, predict_sve, train_mlp
from .nn.gradcheck import run_suite
from .semantics import SubjectVerbCorpus, TagLexicon
from .text import Vocabulary, build_vocabulary, strip_special_tokens
from .word2vec import Word2VecConfig, WordEmbeddingTable, train_word2vec

log = logging.getLogger("aucap")

CACHE_ENV = "AUCAP_CACHE"
LOCK_NAME = ".aucap.lock"
GRADCHECK_TOLERANCE = 1e-4


@contextlib.contextmanager
def output_lock(directory: Path):
    """Exclusive per-directory lock; a held lock is a configuration error."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {directory} is locked by another run ({lock})")
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


def parse_config_file(path: Path) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and # comments are skipped."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(text: str, like) -> object:
    if isinstance(like, bool):
        lowered = text.lower()
        if lowered in ("on", "true", "1", "yes"):
            return True
        if lowered in ("off", "false", "0", "no"):
            return False
        raise ConfigError(f"cannot parse boolean from {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def apply_config_file(args: argparse.Namespace, defaults: dict) -> None:
    """Fill unset flags from the config file, then apply defaults."""
    file_values: dict[str, str] = {}
    if getattr(args, "config", None):
        file_values = parse_config_file(Path(args.config))
    for key, value in file_values.items():
        if key not in defaults and not hasattr(args, key):
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, key, None) is None:
            like = defaults.get(key)
            setattr(args, key, _coerce(value, like) if like is not None else value)
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def resolved_config(args: argparse.Namespace) -> str:
    skip = {"func", "defaults", "command"}
    items = sorted((k, v) for k, v in vars(args).items() if k not in skip)
    return " ".join(f"{k}={v}" for k, v in items)


def _cache_root(args) -> Path:
    root = getattr(args, "cache", None) or os.environ.get(CACHE_ENV)
    if not root:
        raise ConfigError(f"no cache root: pass --cache or set {CACHE_ENV}")
    return Path(root)


def _load_manifest(args, split: str = "development") -> ds.DatasetManifest:
    manifest = ds.DatasetManifest(source_format=args.format)
    manifest.add(split, ds.load_caption_csv(args.csv, args.format, split=split,
                                            audio_dir=getattr(args, "audio_dir", None)))
    return manifest


def _require(path_text: str | None, what: str) -> Path:
    if not path_text:
        raise ConfigError(f"missing required artifact: {what}")
    path = Path(path_text)
    if not path.exists():
        raise ConfigError(f"{what} not found at {path}")
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_extract_features(args) -> int:
    manifest = _load_manifest(args, args.split)
    cache = _cache_root(args)
    feature_config = FeatureConfig(pad_seconds=args.pad_seconds)
    with output_lock(cache / args.variant):
        result = ds.cache_features(manifest.split(args.split), args.variant, cache,
                                   feature_config)
    log.info("extract-features: %d computed, %d skipped, %d failed",
             len(result.computed), len(result.skipped), len(result.errors))
    for clip_id, message in result.errors.items():
        log.error("clip %s: %s", clip_id, message)
    return 1 if result.errors else 0


def cmd_build_sve(args) -> int:
    manifest = _load_manifest(args)
    lexicon = TagLexicon.load(_require(args.lexicon, "tag lexicon"))
    from .semantics import build_corpus

    corpus = build_corpus(manifest.captions("development"), lexicon)
    out = Path(args.out)
    with output_lock(out):
        corpus.save(out / "sve_corpus.txt")
        if args.matrix_out:
            records = manifest.split("development")
            targets = ds.sve_targets(records, corpus, lexicon)
            from . import embfile

            matrix = np.stack([targets[r.clip_id] for r in records]) if corpus.size else \
                np.zeros((len(records), 0))
            if corpus.size:
                embfile.write_matrix(out / "sve_targets.emb", matrix)
            (out / "sve_clips.txt").write_text(
                "".join(f"{r.clip_id}\n" for r in records), encoding="utf-8")
    log.info("build-sve: corpus of K=%d roots written to %s", corpus.size, out)
    return 0


def cmd_train_w2v(args) -> int:
    manifest = _load_manifest(args)
    captions = manifest.captions("development")
    vocab = build_vocabulary(captions)
    config = Word2VecConfig(dim=args.dim, window=args.window, negatives=args.negatives,
                            epochs=args.epochs, seed=args.seed)
    table = train_word2vec(captions, vocab, config)
    out = Path(args.out)
    with output_lock(out):
        vocab.save(out / "vocabulary.tsv")
        table.save(out / "word_embeddings.emb")
    log.info("train-w2v: vocabulary of %d words, %d-dim embeddings, final loss %.4f",
             len(vocab), table.dim, table.epoch_losses[-1] if table.epoch_losses else float("nan"))
    return 0


def cmd_train_mlp(args) -> int:
    manifest = _load_manifest(args)
    records = manifest.split("development")
    lexicon = TagLexicon.load(_require(args.lexicon, "tag lexicon"))
    corpus = SubjectVerbCorpus.load(_require(args.corpus, "subject-verb corpus"), lexicon)
    if corpus.size == 0:
        raise ConfigError("subject-verb corpus is empty (K=0); nothing to train")
    cache = _cache_root(args)
    features = ds.load_cached_features(cache, args.variant, [r.clip_id for r in records])
    targets = ds.sve_targets(records, corpus, lexicon)
    x = np.stack([features[r.clip_id].reshape(-1) for r in records])
    y = np.stack([targets[r.clip_id] for r in records])
    config = MLPConfig(input_dim=x.shape[1], output_dim=corpus.size,
                       dropout=args.dropout, epochs=args.epochs,
                       batch_size=args.batch, seed=args.seed,
                       learning_rate=args.learning_rate)
    model, history = train_mlp(x, y, config)
    out = Path(args.out)
    with output_lock(out):
        model.save(out / "sve_mlp.ckpt")
    log.info("train-mlp: best epoch %d, final train loss %.4f",
             history.best_epoch + 1, history.train_losses[-1])
    return 0


def _load_word_embeddings(args, vocab: Vocabulary, embed_dim: int):
    if not getattr(args, "w2v", None):
        log.info("no --w2v given; embedding layer starts from random init")
        return None
    table = WordEmbeddingTable.load(_require(args.w2v, "word embeddings"), expected_dim=embed_dim)
    if table.matrix.shape[0] != len(vocab):
        raise ConfigError(
            f"word embeddings cover {table.matrix.shape[0]} words but vocabulary has {len(vocab)}"
        )
    return table.matrix


def cmd_train_captioner(args) -> int:
    vocab = Vocabulary.load(_require(args.vocab, "vocabulary"))
    manifest = ds.DatasetManifest(source_format=args.format)
    manifest.add("development", ds.load_caption_csv(args.csv, args.format, split="development"))
    if args.val_csv:
        manifest.add("validation",
                     ds.load_caption_csv(args.val_csv, args.format, split="validation"))
    elif args.val_fraction > 0:
        manifest = ds.hold_out_validation(manifest, args.val_fraction, args.seed)

    use_sve = args.use_sve
    sves = None
    corpus_sha = ""
    sve_dim = 0
    records = manifest.split("development") + manifest.split("validation")
    if use_sve:
        lexicon = TagLexicon.load(_require(args.lexicon, "tag lexicon"))
        corpus = SubjectVerbCorpus.load(_require(args.corpus, "subject-verb corpus"), lexicon)
        if corpus.size == 0:
            log.warning("subject-verb corpus is empty; continuing without SVE")
            use_sve = False
        else:
            sves = ds.sve_targets(records, corpus, lexicon)
            corpus_sha = corpus.sha256()
            sve_dim = corpus.size

    cache = _cache_root(args)
    features = ds.load_cached_features(cache, args.variant, [r.clip_id for r in records])
    config = CaptionerConfig(
        variant=args.variant, sve_dim=sve_dim, dropout=args.dropout,
        learning_rate=args.learning_rate, epochs=args.epochs, batch_size=args.batch,
        seed=args.seed, embed_dim=args.embed_dim,
    )
    embed_init = _load_word_embeddings(args, vocab, config.embed_dim)
    train_pairs = ds.expand_pairs(manifest, "development")
    val_pairs = ds.expand_pairs(manifest, "validation") or None
    checkpoint, history = train_captioner(
        train_pairs, features, sves, vocab, config,
        val_pairs=val_pairs, embed_init=embed_init, corpus_sha256=corpus_sha,
    )
    out = Path(args.out)
    with output_lock(out):
        checkpoint.save(out / "captioner.ckpt")
    log.info("train-captioner: best epoch %d, final train loss %.4f",
             history["best_epoch"] + 1, history["train_loss"][-1])
    return 0


def _predict_sves(args, checkpoint, manifest, cache) -> dict[str, np.ndarray]:
    records = manifest.split("development")
    k = checkpoint.config.sve_dim
    source = args.sve_source
    if source == "off":
        raise ConfigError("checkpoint was trained with SVE; --sve-source off is inconsistent")
    if source == "mlp":
        model = MLP.load(_require(args.mlp, "SVE MLP checkpoint"))
        if model.config.output_dim != k:
            raise ConfigError(f"MLP predicts {model.config.output_dim} labels, checkpoint needs {k}")
        mlp_variant = next((v for v, d in VARIANT_DIMS.items() if d == model.config.input_dim),
                           None)
        if mlp_variant is None:
            raise ConfigError(f"MLP input dim {model.config.input_dim} matches no variant")
        feats = ds.load_cached_features(cache, mlp_variant, [r.clip_id for r in records])
        return {r.clip_id: predict_sve(model, feats[r.clip_id].reshape(-1)) for r in records}
    lexicon = TagLexicon.load(_require(args.lexicon, "tag lexicon"))
    corpus = SubjectVerbCorpus.load(_require(args.corpus, "subject-verb corpus"), lexicon)
    if corpus.sha256() != checkpoint.corpus_sha256:
        raise ConfigError("subject-verb corpus does not match the checkpoint")
    return ds.sve_targets(records, corpus, lexicon)


def cmd_predict(args) -> int:
    vocab = Vocabulary.load(_require(args.vocab, "vocabulary"))
    checkpoint = CaptionerCheckpoint.load(_require(args.checkpoint, "captioner checkpoint"),
                                          vocab=vocab)
    model = checkpoint.build_model()
    manifest = _load_manifest(args)
    records = manifest.split("development")
    cache = _cache_root(args)
    features = ds.load_cached_features(cache, checkpoint.config.variant,
                                       [r.clip_id for r in records])
    sves = None
    if checkpoint.config.sve_dim > 0:
        sves = _predict_sves(args, checkpoint, manifest, cache)
    lines = []
    for record in records:
        sve = sves[record.clip_id] if sves is not None else None
        enc = build_encoder_input(features[record.clip_id], sve, checkpoint.config.variant)
        tokens = model.greedy_decode(enc, vocab, max_len=args.max_len)
        caption = " ".join(strip_special_tokens(tokens))
        lines.append(f"{record.clip_id}\t{caption}\n")
    out = Path(args.out)
    with output_lock(out.parent if out.suffix else out):
        target = out if out.suffix else out / "predictions.tsv"
        target.write_text("".join(lines), encoding="utf-8")
    log.info("predict: wrote %d captions to %s", len(lines), target)
    return 0


def cmd_evaluate(args) -> int:
    report = metrics.evaluate_files(_require(args.candidates, "candidate file"),
                                    _require(args.references, "reference file"))
    text = report.table() + report.key_value_lines()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(seed=args.seed)
    failed = False
    for name, err in results.items():
        status = "ok" if err < GRADCHECK_TOLERANCE else "FAIL"
        sys.stdout.write(f"{name}: max relative error {err:.3e} [{status}]\n")
        failed |= err >= GRADCHECK_TOLERANCE
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(sub, *, csv=True):
    sub.add_argument("--config", help="key = value config file; flags override it")
    sub.add_argument("--seed", type=int, help="seed for all randomness")
    if csv:
        sub.add_argument("--csv", help="caption CSV")
        sub.add_argument("--format", choices=ds.FORMATS, help="CSV layout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aucap",
                                     description="audio captioning pipeline")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("extract-features", help="fill the feature cache")
    _add_common(p)
    p.add_argument("--split", choices=ds.SPLITS)
    p.add_argument("--audio-dir", help="directory holding the referenced files")
    p.add_argument("--variant", choices=sorted(VARIANT_DIMS))
    p.add_argument("--cache", help=f"cache root (default ${CACHE_ENV})")
    p.add_argument("--pad-seconds", type=float)
    p.set_defaults(func=cmd_extract_features,
                   defaults={"seed": 0, "format": "generic", "split": "development",
                             "variant": "logmel", "pad_seconds": 30.0})

    p = commands.add_parser("build-sve", help="build the subject-verb corpus")
    _add_common(p)
    p.add_argument("--lexicon", help="word<TAB>TAG lexicon file")
    p.add_argument("--matrix-out", action="store_true",
                   help="also write per-clip SVE target matrix")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_build_sve,
                   defaults={"seed": 0, "format": "generic", "matrix_out": False})

    p = commands.add_parser("train-w2v", help="train word embeddings and the vocabulary")
    _add_common(p)
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_train_w2v,
                   defaults={"seed": 0, "format": "generic", "dim": 256, "window": 5,
                             "negatives": 5, "epochs": 15})

    p = commands.add_parser("train-mlp", help="train the SVE predictor")
    _add_common(p)
    p.add_argument("--lexicon")
    p.add_argument("--corpus", help="sve_corpus.txt from build-sve")
    p.add_argument("--cache")
    p.add_argument("--variant", choices=sorted(VARIANT_DIMS))
    p.add_argument("--dropout", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_train_mlp,
                   defaults={"seed": 0, "format": "generic", "variant": "panns",
                             "dropout": 0.5, "learning_rate": 1e-3, "epochs": 100,
                             "batch": 64})

    p = commands.add_parser("train-captioner", help="train the encoder-decoder")
    _add_common(p)
    p.add_argument("--val-csv", help="explicit validation CSV")
    p.add_argument("--val-fraction", type=float,
                   help="held-out fraction of development when no --val-csv")
    p.add_argument("--vocab", help="vocabulary.tsv from train-w2v")
    p.add_argument("--w2v", help="word_embeddings.emb from train-w2v")
    p.add_argument("--cache")
    p.add_argument("--variant", choices=sorted(VARIANT_DIMS))
    p.add_argument("--use-sve", choices=("on", "off"))
    p.add_argument("--lexicon")
    p.add_argument("--corpus")
    p.add_argument("--dropout", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_captioner,
                   defaults={"seed": 0, "format": "generic", "variant": "panns",
                             "use_sve": "on", "dropout": 0.5, "learning_rate": 1e-3,
                             "embed_dim": 256, "epochs": 50, "batch": 64,
                             "val_fraction": 0.1})

    p = commands.add_parser("predict", help="greedy-decode captions for clips")
    _add_common(p)
    p.add_argument("--checkpoint", help="captioner.ckpt")
    p.add_argument("--vocab")
    p.add_argument("--cache")
    p.add_argument("--sve-source", choices=("mlp", "captions", "off"))
    p.add_argument("--mlp", help="sve_mlp.ckpt for --sve-source mlp")
    p.add_argument("--lexicon")
    p.add_argument("--corpus")
    p.add_argument("--max-len", type=int)
    p.add_argument("--out", help="output file or directory")
    p.set_defaults(func=cmd_predict,
                   defaults={"seed": 0, "format": "generic", "sve_source": "mlp",
                             "max_len": 22})

    p = commands.add_parser("evaluate", help="score candidates against references")
    _add_common(p, csv=False)
    p.add_argument("--candidates", help="clip_id<TAB>caption file")
    p.add_argument("--references", help="clip_id<TAB>caption file (repeat ids for >1 ref)")
    p.add_argument("--out", help="optional report file")
    p.set_defaults(func=cmd_evaluate, defaults={"seed": 0})

    p = commands.add_parser("gradcheck", help="finite-difference gradient suite")
    _add_common(p, csv=False)
    p.set_defaults(func=cmd_gradcheck, defaults={"seed": 0})
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        apply_config_file(args, args.defaults)
        log.info("resolved config: %s", resolved_config(args))
        np.random.seed(args.seed)  # module-level fallback; components seed explicitly
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except AucapError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
