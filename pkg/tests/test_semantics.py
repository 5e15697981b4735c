import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aucap.errors import SemanticsError
from aucap.semantics import (
    NOUN,
    OTHER,
    VERB,
    SubjectVerbCorpus,
    TagLexicon,
    build_corpus,
    encode_sve,
    extract_subjects_verbs,
    to_root,
)
from aucap.text import EOS, SOS, clean_caption


def brute_force_corpus(captions, lex):
    """Oracle: unique rooted subjects+verbs in first-appearance order."""
    seen, out = set(), []
    for caption in captions:
        for word in extract_subjects_verbs(caption, lex):
            root = to_root(word)
            if root not in seen:
                seen.add(root)
                out.append(root)
    return out


class TestToRoot:
    @pytest.mark.parametrize("word,root", [
        ("barks", "bark"),
        ("bark", "bark"),
        ("talking", "talk"),
        ("dogs", "dog"),
        ("passes", "pass"),
        ("walked", "walk"),
        ("running", "run"),
        ("agreed", "agree"),
        ("miss", "miss"),
        ("sing", "sing"),
        ("cries", "cry"),
        ("cry", "cry"),
        ("studies", "studi"),
        ("study", "studi"),
    ])
    def test_cases(self, word, root):
        assert to_root(word) == root

    @settings(max_examples=500)
    @given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=12))
    def test_idempotent(self, word):
        once = to_root(word)
        assert to_root(once) == once

    def test_idempotent_on_lexicon(self, toy_lexicon):
        for word in toy_lexicon.entries:
            assert to_root(to_root(word)) == to_root(word)


class TestTagLexicon:
    def test_resolution_order(self):
        lex = TagLexicon({"running": NOUN}, suffix_rules=(("ing", VERB),))
        assert lex.tag("running") == NOUN  # exact beats suffix
        assert lex.tag("jumping") == VERB
        assert lex.tag("table") == OTHER

    def test_every_word_resolves(self, toy_lexicon):
        for word in ["xyzzy", "qqing", "a", ""]:
            assert toy_lexicon.tag(word) in (NOUN, VERB, OTHER)

    def test_save_load_round_trip(self, tmp_path, toy_lexicon):
        toy_lexicon.save(tmp_path / "lex.tsv")
        loaded = TagLexicon.load(tmp_path / "lex.tsv")
        assert loaded.entries == toy_lexicon.entries
        assert loaded.sha256() == toy_lexicon.sha256()

    def test_bad_tag_rejected(self):
        with pytest.raises(SemanticsError):
            TagLexicon({"dog": "ADJ"})


class TestExtract:
    def test_simple(self, toy_lexicon):
        assert extract_subjects_verbs([SOS, "dog", "barks", "loudly", EOS],
                                      toy_lexicon) == ["dog", "barks"]

    def test_no_noun_or_verb(self, toy_lexicon):
        assert extract_subjects_verbs([SOS, "loudly", EOS], toy_lexicon) == []

    def test_noun_after_first_verb_excluded(self, toy_lexicon):
        tokens = [SOS, "man", "speaks", "dog", "barks", EOS]
        assert extract_subjects_verbs(tokens, toy_lexicon) == ["man", "speaks", "barks"]


class TestBuildCorpus:
    def test_hand_trace(self, toy_lexicon):
        captions = [clean_caption("dog barks"), clean_caption("man speaks")]
        corpus = build_corpus(captions, toy_lexicon)
        assert list(corpus.words) == ["dog", "bark", "man", "speak"]
        assert corpus.size == 4

    def test_duplicate_captions_change_nothing(self, toy_lexicon):
        captions = [clean_caption("dog barks"), clean_caption("man speaks")]
        a = build_corpus(captions, toy_lexicon)
        b = build_corpus(captions * 3, toy_lexicon)
        assert a.words == b.words

    def test_empty_corpus_allowed(self, toy_lexicon):
        corpus = build_corpus([clean_caption("loudly softly")], toy_lexicon)
        assert corpus.size == 0

    def test_matches_brute_force_on_random_sets(self, toy_lexicon):
        rng = np.random.RandomState(11)
        words = list(toy_lexicon.entries)
        for _ in range(60):
            n_caps = rng.randint(1, 50)
            captions = []
            for _ in range(n_caps):
                body = [words[i] for i in rng.randint(0, len(words), rng.randint(2, 8))]
                captions.append([SOS, *body, EOS])
            corpus = build_corpus(captions, toy_lexicon)
            assert list(corpus.words) == brute_force_corpus(captions, toy_lexicon)

    def test_save_load_round_trip(self, tmp_path, toy_lexicon):
        corpus = build_corpus([clean_caption("dog barks"), clean_caption("rain falls")],
                              toy_lexicon)
        corpus.save(tmp_path / "corpus.txt")
        loaded = SubjectVerbCorpus.load(tmp_path / "corpus.txt", toy_lexicon)
        assert loaded.words == corpus.words
        assert loaded.sha256() == corpus.sha256()


class TestEncodeSve:
    def test_membership_bits(self, toy_lexicon):
        corpus = build_corpus([clean_caption("dog barks"), clean_caption("man speaks")],
                              toy_lexicon)
        vec = encode_sve(clean_caption("dog barks"), corpus, toy_lexicon)
        assert np.array_equal(vec, [1.0, 1.0, 0.0, 0.0])

    def test_disjoint_caption_is_zero(self, toy_lexicon):
        corpus = build_corpus([clean_caption("dog barks")], toy_lexicon)
        vec = encode_sve(clean_caption("rain falls"), corpus, toy_lexicon)
        assert np.array_equal(vec, np.zeros(corpus.size))

    def test_contributing_caption_sets_a_bit(self, toy_lexicon):
        captions = [clean_caption(t) for t in ("dog barks", "man speaks", "rain falls")]
        corpus = build_corpus(captions, toy_lexicon)
        for caption in captions:
            assert encode_sve(caption, corpus, toy_lexicon).sum() >= 1

    def test_restatement_invariant(self, toy_lexicon):
        rng = np.random.RandomState(5)
        words = list(toy_lexicon.entries)
        captions = []
        for _ in range(25):
            body = [words[i] for i in rng.randint(0, len(words), rng.randint(2, 7))]
            captions.append([SOS, *body, EOS])
        corpus = build_corpus(captions, toy_lexicon)
        for caption in captions:
            roots = {to_root(w) for w in extract_subjects_verbs(caption, toy_lexicon)}
            vec = encode_sve(caption, corpus, toy_lexicon)
            for k, word in enumerate(corpus.words):
                assert vec[k] == (1.0 if word in roots else 0.0)

    def test_lexicon_mismatch_rejected(self, toy_lexicon):
        corpus = build_corpus([clean_caption("dog barks")], toy_lexicon)
        other = TagLexicon({"dog": NOUN})
        with pytest.raises(SemanticsError):
            encode_sve(clean_caption("dog barks"), corpus, other)
