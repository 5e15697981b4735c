"""Subject-verb semantic embeddings.

A caption contributes its subjects (nouns before the first verb) and all its
verbs, reduced to root form. The corpus is the deduplicated, first-appearance
ordered list of those roots over the training captions; each caption then
encodes as a binary membership vector over the corpus.

Tagging uses a word -> {NOUN, VERB, OTHER} lexicon with ordered suffix-rule
fallbacks, standing in for a full parser; lexicons are plain files so
pre-tagged annotations can be dropped in.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SemanticsError
from .text import strip_special_tokens

log = logging.getLogger(__name__)

NOUN = "NOUN"
VERB = "VERB"
OTHER = "OTHER"
_TAGS = (NOUN, VERB, OTHER)

_VOWELS = set("aeiou")

DEFAULT_SUFFIX_RULES = (("ing", VERB), ("ed", VERB))


def _has_vowel(word: str) -> bool:
    return any(ch in _VOWELS or ch == "y" for ch in word)


def _ends_cvc(word: str) -> bool:
    if len(word) < 3:
        return False
    c1, v, c2 = word[-3], word[-2], word[-1]
    return c1 not in _VOWELS and v in _VOWELS and c2 not in _VOWELS and c2 not in "wxy"


def to_root(word: str) -> str:
    """Suffix-stripping stemmer (Porter step-1 style); deterministic and idempotent."""
    w = word
    # plural endings
    if w.endswith("sses"):
        w = w[:-2]
    elif w.endswith("ies"):
        w = w[:-3] + "y"  # merges with the singular through the terminal-y rule
    elif w.endswith("ss"):
        pass
    elif w.endswith("s") and len(w) > 3:
        w = w[:-1]
    # -ed / -ing
    if w.endswith("eed"):
        if len(w) > 4:
            w = w[:-1]
    else:
        stem = None
        if w.endswith("ed") and _has_vowel(w[:-2]):
            stem = w[:-2]
        elif w.endswith("ing") and _has_vowel(w[:-3]):
            stem = w[:-3]
        if stem is not None:
            if stem.endswith(("at", "bl", "iz")):
                stem += "e"
            elif len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS \
                    and stem[-1] not in "lsz":
                stem = stem[:-1]
            elif _ends_cvc(stem) and sum(ch in _VOWELS for ch in stem) == 1:
                stem += "e"
            w = stem
    # terminal y -> i when a vowel precedes it
    if w.endswith("y") and len(w) > 2 and _has_vowel(w[:-1]):
        w = w[:-1] + "i"
    return w


class TagLexicon:
    """word -> part-of-speech table with ordered suffix-rule fallbacks.

    Resolution: exact entry, then the first matching suffix rule, then OTHER.
    Every word therefore maps to exactly one tag.
    """

    def __init__(self, entries: dict[str, str] | None = None,
                 suffix_rules=DEFAULT_SUFFIX_RULES, default: str = OTHER):
        entries = dict(entries or {})
        for word, tag in entries.items():
            if tag not in _TAGS:
                raise SemanticsError(f"unknown tag {tag!r} for word {word!r}")
        if default not in _TAGS:
            raise SemanticsError(f"unknown default tag {default!r}")
        self.entries = entries
        self.suffix_rules = tuple(suffix_rules)
        self.default = default

    def tag(self, word: str) -> str:
        hit = self.entries.get(word)
        if hit is not None:
            return hit
        for suffix, tag in self.suffix_rules:
            if word.endswith(suffix) and len(word) > len(suffix):
                return tag
        return self.default

    def sha256(self) -> str:
        digest = hashlib.sha256()
        for word in sorted(self.entries):
            digest.update(f"{word}\t{self.entries[word]}\n".encode("utf-8"))
        for suffix, tag in self.suffix_rules:
            digest.update(f"*{suffix}\t{tag}\n".encode("utf-8"))
        digest.update(self.default.encode("ascii"))
        return digest.hexdigest()

    def save(self, path: str | Path) -> None:
        lines = [f"{w}\t{t}\n" for w, t in sorted(self.entries.items())]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, suffix_rules=DEFAULT_SUFFIX_RULES) -> "TagLexicon":
        entries = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
            if not line or line.startswith("#"):
                continue
            word, sep, tag = line.partition("\t")
            if not sep:
                raise SemanticsError(f"{path}:{lineno + 1}: expected word<TAB>TAG")
            entries[word] = tag.strip()
        return cls(entries, suffix_rules=suffix_rules)


@dataclass(frozen=True)
class SubjectVerbCorpus:
    """Ordered, deduplicated root words; K = len(words)."""

    words: tuple[str, ...]
    lexicon_sha256: str
    _index: dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: k for k, w in enumerate(self.words)})
        if len(self._index) != len(self.words):
            raise SemanticsError("corpus contains duplicate words")

    @property
    def size(self) -> int:
        return len(self.words)

    def __len__(self) -> int:
        return len(self.words)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{w}\n" for w in self.words), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, lexicon: TagLexicon) -> "SubjectVerbCorpus":
        words = [w for w in Path(path).read_text(encoding="utf-8").splitlines() if w]
        return cls(words=tuple(words), lexicon_sha256=lexicon.sha256())

    def sha256(self) -> str:
        digest = hashlib.sha256()
        for word in self.words:
            digest.update(word.encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()


def extract_subjects_verbs(caption: list[str], lex: TagLexicon) -> list[str]:
    """Nouns before the first verb, plus every verb, in caption order."""
    tokens = strip_special_tokens(caption)
    tags = [lex.tag(t) for t in tokens]
    first_verb = next((i for i, t in enumerate(tags) if t == VERB), len(tokens))
    out = []
    for i, (token, tag) in enumerate(zip(tokens, tags)):
        if tag == VERB or (tag == NOUN and i < first_verb):
            out.append(token)
    return out


def build_corpus(captions, lex: TagLexicon) -> SubjectVerbCorpus:
    """Union of rooted subjects/verbs over all captions, first-appearance order."""
    captions = list(captions)
    if not captions:
        raise SemanticsError("caption list is empty")
    words: list[str] = []
    seen: set[str] = set()
    for caption in captions:
        for word in extract_subjects_verbs(caption, lex):
            root = to_root(word)
            if root not in seen:
                seen.add(root)
                words.append(root)
    if not words:
        log.warning("subject-verb corpus is empty; SVE features are disabled (K=0)")
    return SubjectVerbCorpus(words=tuple(words), lexicon_sha256=lex.sha256())


def encode_sve(caption: list[str], corpus: SubjectVerbCorpus, lex: TagLexicon) -> np.ndarray:
    """Binary vector: bit k set iff corpus[k] is a rooted subject/verb of the caption."""
    if lex.sha256() != corpus.lexicon_sha256:
        raise SemanticsError("corpus was built with a different lexicon")
    roots = {to_root(w) for w in extract_subjects_verbs(caption, lex)}
    vec = np.zeros(corpus.size, dtype=np.float64)
    for k, word in enumerate(corpus.words):
        if word in roots:
            vec[k] = 1.0
    return vec
