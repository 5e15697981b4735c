"""Corpus-level caption metrics: BLEU-n, ROUGE-L, CIDEr, METEOR.

All scorers take a list of candidate token sequences and a parallel list of
reference lists, strip the special tokens, and return floats. BLEU is
corpus-counted with per-reference clipping and the closest-length brevity
penalty; ROUGE-L is the F-measure over longest common subsequences
(beta = 1.2); CIDEr follows the original TF-IDF cosine formulation over
1..4-grams scaled by 10; METEOR aligns exact matches first, stems second,
and applies the fragmentation penalty 0.5 * (chunks / matches)^3.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyCaptionError, MetricError
from .semantics import to_root
from .text import clean_caption, strip_special_tokens

_CIDER_MAX_N = 4
_ROUGE_BETA = 1.2


def _prepare(candidates, reference_lists):
    if len(candidates) != len(reference_lists):
        raise MetricError(
            f"{len(candidates)} candidates vs {len(reference_lists)} reference lists"
        )
    if not candidates:
        raise MetricError("empty candidate set")
    cands = [strip_special_tokens(list(c)) for c in candidates]
    refs = []
    for i, group in enumerate(reference_lists):
        if not group:
            raise MetricError(f"candidate {i} has no references")
        refs.append([strip_special_tokens(list(r)) for r in group])
    return cands, refs


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def bleu(candidates, reference_lists, n: int = 4) -> float:
    """Corpus BLEU-n: clipped modified precision, geometric mean over 1..n,
    brevity penalty against the closest-length reference."""
    if n < 1:
        raise MetricError(f"bleu order must be >= 1, got {n}")
    cands, refs = _prepare(candidates, reference_lists)
    correct = [0] * n
    guess = [0] * n
    cand_len = 0
    ref_len = 0
    for cand, group in zip(cands, refs):
        c = len(cand)
        cand_len += c
        ref_len += min((abs(len(r) - c), len(r)) for r in group)[1]
        for k in range(1, n + 1):
            counts = _ngram_counts(cand, k)
            guess[k - 1] += max(0, c - k + 1)
            if not counts:
                continue
            max_ref = Counter()
            for r in group:
                for ngram, cnt in _ngram_counts(r, k).items():
                    if cnt > max_ref[ngram]:
                        max_ref[ngram] = cnt
            correct[k - 1] += sum(min(cnt, max_ref[ngram]) for ngram, cnt in counts.items())
    precisions = [correct[k] / guess[k] if guess[k] > 0 else 0.0 for k in range(n)]
    if any(p == 0.0 for p in precisions):
        return 0.0
    if cand_len == 0:
        return 0.0
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(sum(math.log(p) for p in precisions) / n)


# ---------------------------------------------------------------------------
# ROUGE-L
# ---------------------------------------------------------------------------


def lcs_length(a, b) -> int:
    """Longest common subsequence via the standard DP table."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidates, reference_lists, beta: float = _ROUGE_BETA) -> float:
    """Mean over the corpus of the best per-reference LCS F-measure."""
    cands, refs = _prepare(candidates, reference_lists)
    total = 0.0
    for cand, group in zip(cands, refs):
        best = 0.0
        for ref in group:
            lcs = lcs_length(cand, ref)
            if lcs == 0 or not cand or not ref:
                continue
            p = lcs / len(cand)
            r = lcs / len(ref)
            f = (1.0 + beta**2) * p * r / (r + beta**2 * p)
            best = max(best, f)
        total += best
    return total / len(cands)


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------


def _tfidf_vector(counts: Counter, idf: dict) -> dict:
    return {ng: cnt * idf[ng] for ng, cnt in counts.items()}


def _cosine(a: dict, b: dict) -> float:
    dot = sum(w * b[ng] for ng, w in a.items() if ng in b)
    na = math.sqrt(sum(w * w for w in a.values()))
    nb = math.sqrt(sum(w * w for w in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def cider(candidates, reference_lists) -> float:
    """TF-IDF n-gram cosine similarity (n = 1..4), averaged over references,
    scaled by 10, averaged over n and then over the corpus.

    IDF comes from the reference corpus: idf = ln(N / max(1, df)) with df the
    number of clips whose references contain the n-gram. Needs at least two
    clips for the document statistics to exist.
    """
    cands, refs = _prepare(candidates, reference_lists)
    n_docs = len(cands)
    if n_docs < 2:
        raise MetricError("CIDEr needs a corpus of at least 2 clips for IDF")
    idf_by_n: list[dict] = []
    for n in range(1, _CIDER_MAX_N + 1):
        df: Counter = Counter()
        for group in refs:
            seen = set()
            for ref in group:
                seen.update(_ngram_counts(ref, n).keys())
            df.update(seen)
        idf_by_n.append({ng: math.log(n_docs / max(1, cnt)) for ng, cnt in df.items()})

    total = 0.0
    for cand, group in zip(cands, refs):
        per_n = []
        for n in range(1, _CIDER_MAX_N + 1):
            idf = idf_by_n[n - 1]
            cand_counts = _ngram_counts(cand, n)
            # candidate n-grams never seen in any reference carry idf = ln(N)
            cand_vec = {ng: cnt * idf.get(ng, math.log(n_docs))
                        for ng, cnt in cand_counts.items()}
            sims = [_cosine(cand_vec, _tfidf_vector(_ngram_counts(r, n), idf)) for r in group]
            per_n.append(10.0 * sum(sims) / len(sims))
        total += sum(per_n) / len(per_n)
    return total / len(cands)


# ---------------------------------------------------------------------------
# METEOR
# ---------------------------------------------------------------------------


def _greedy_align(cand, ref) -> list[tuple[int, int]]:
    """One-to-one alignment: exact matches first, then stem matches."""
    pairs: list[tuple[int, int]] = []
    used_c = [False] * len(cand)
    used_r = [False] * len(ref)
    for stage_key in (lambda w: w, to_root):
        ref_keys = [stage_key(w) for w in ref]
        for i, word in enumerate(cand):
            if used_c[i]:
                continue
            key = stage_key(word)
            for j, rkey in enumerate(ref_keys):
                if not used_r[j] and rkey == key:
                    pairs.append((i, j))
                    used_c[i] = True
                    used_r[j] = True
                    break
    return sorted(pairs)


def _chunk_count(pairs: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for c, r in pairs:
        if prev is None or c != prev[0] + 1 or r != prev[1] + 1:
            chunks += 1
        prev = (c, r)
    return chunks


def meteor(candidates, reference_lists) -> float:
    """Best per-reference METEOR, averaged over the corpus.

    F_mean = 10PR / (R + 9P); penalty = 0.5 * (chunks / matches)^3.
    """
    cands, refs = _prepare(candidates, reference_lists)
    total = 0.0
    for cand, group in zip(cands, refs):
        best = 0.0
        for ref in group:
            if not cand or not ref:
                continue
            pairs = _greedy_align(cand, ref)
            m = len(pairs)
            if m == 0:
                continue
            p = m / len(cand)
            r = m / len(ref)
            f_mean = 10.0 * p * r / (r + 9.0 * p)
            penalty = 0.5 * (_chunk_count(pairs) / m) ** 3
            best = max(best, f_mean * (1.0 - penalty))
        total += best
    return total / len(cands)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreReport:
    bleu_1: float
    bleu_2: float
    bleu_3: float
    bleu_4: float
    cider: float
    meteor: float
    rouge_l: float

    def as_dict(self) -> dict[str, float]:
        return {
            "B-1": self.bleu_1, "B-2": self.bleu_2, "B-3": self.bleu_3, "B-4": self.bleu_4,
            "CIDEr": self.cider, "METEOR": self.meteor, "ROUGE_L": self.rouge_l,
        }

    def key_value_lines(self) -> str:
        return "".join(f"{k}: {v:.6f}\n" for k, v in self.as_dict().items())

    def table(self) -> str:
        items = self.as_dict()
        head = "  ".join(f"{k:>8}" for k in items)
        row = "  ".join(f"{v:8.4f}" for v in items.values())
        return f"{head}\n{row}\n"


def score_corpus(candidates, reference_lists) -> ScoreReport:
    return ScoreReport(
        bleu_1=bleu(candidates, reference_lists, 1),
        bleu_2=bleu(candidates, reference_lists, 2),
        bleu_3=bleu(candidates, reference_lists, 3),
        bleu_4=bleu(candidates, reference_lists, 4),
        cider=cider(candidates, reference_lists),
        meteor=meteor(candidates, reference_lists),
        rouge_l=rouge_l(candidates, reference_lists),
    )


def _tokenize_line(text: str) -> list[str]:
    try:
        return clean_caption(text)
    except EmptyCaptionError:
        return []


def read_caption_tsv(path: str | Path) -> dict[str, list[list[str]]]:
    """Read ``clip_id<TAB>caption`` lines; repeated ids accumulate captions."""
    table: dict[str, list[list[str]]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        clip_id, sep, caption = line.partition("\t")
        if not sep:
            raise MetricError(f"{path}:{lineno + 1}: expected clip_id<TAB>caption")
        table.setdefault(clip_id, []).append(_tokenize_line(caption))
    return table


def evaluate_files(candidate_path: str | Path, reference_path: str | Path) -> ScoreReport:
    """Score a candidate file against a reference file, aligned by clip id."""
    cand_table = read_caption_tsv(candidate_path)
    ref_table = read_caption_tsv(reference_path)
    candidates = []
    references = []
    for clip_id, captions in cand_table.items():
        if len(captions) != 1:
            raise MetricError(f"{candidate_path}: clip {clip_id!r} has {len(captions)} candidates")
        if clip_id not in ref_table:
            raise MetricError(f"{reference_path}: no references for clip {clip_id!r}")
        candidates.append(captions[0])
        references.append(ref_table[clip_id])
    return score_corpus(candidates, references)
