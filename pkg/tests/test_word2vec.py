import numpy as np

from aucap.text import build_vocabulary, clean_caption
from aucap.word2vec import (
    Word2VecConfig,
    WordEmbeddingTable,
    cosine,
    sgns_event_grads,
    sgns_event_loss,
    train_word2vec,
)


def toy_corpus():
    lines = [
        "the cat eats fresh food daily",
        "the feline eats fresh food daily",
        "the cat drinks cold water",
        "the feline drinks cold water",
        "loud trucks rumble across town",
        "quiet snow settles over rooftops",
        "children laugh near the old fountain",
    ]
    return [clean_caption(t) for t in lines for _ in range(8)]


class TestTraining:
    def test_degenerate_single_word(self):
        corpus = [clean_caption("dog dog")]
        vocab = build_vocabulary(corpus)
        table = train_word2vec(corpus, vocab, Word2VecConfig(dim=16, epochs=2, seed=1))
        assert np.all(np.isfinite(table.matrix))
        assert all(np.isfinite(v) for v in table.epoch_losses)

    def test_deterministic(self):
        corpus = toy_corpus()
        vocab = build_vocabulary(corpus)
        cfg = Word2VecConfig(dim=24, epochs=2, seed=7)
        a = train_word2vec(corpus, vocab, cfg)
        b = train_word2vec(corpus, vocab, cfg)
        assert np.array_equal(a.matrix, b.matrix)

    def test_shared_contexts_converge(self):
        # "cat" and "feline" appear in identical contexts
        corpus = toy_corpus()
        vocab = build_vocabulary(corpus)
        table = train_word2vec(corpus, vocab, Word2VecConfig(dim=32, epochs=20, seed=3))
        cat = table.vector(vocab.index("cat"))
        feline = table.vector(vocab.index("feline"))
        unrelated = table.vector(vocab.index("rooftops"))
        assert cosine(cat, feline) > cosine(cat, unrelated)

    def test_matrix_covers_vocabulary(self):
        corpus = toy_corpus()
        vocab = build_vocabulary(corpus)
        table = train_word2vec(corpus, vocab, Word2VecConfig(dim=8, epochs=1, seed=0))
        assert table.matrix.shape == (len(vocab), 8)

    def test_save_load_round_trip(self, tmp_path):
        corpus = toy_corpus()
        vocab = build_vocabulary(corpus)
        table = train_word2vec(corpus, vocab, Word2VecConfig(dim=8, epochs=1, seed=0))
        table.save(tmp_path / "emb.emb")
        loaded = WordEmbeddingTable.load(tmp_path / "emb.emb", expected_dim=8)
        assert np.allclose(loaded.matrix, table.matrix, atol=1e-7)  # float32 container


class TestGradients:
    def test_matches_finite_differences(self):
        # 5-word toy vocabulary, every touched row checked coordinate-wise
        rng = np.random.RandomState(0)
        dim = 6
        w_in = rng.standard_normal((5, dim)) * 0.3
        w_out = rng.standard_normal((5, dim)) * 0.3
        center, context = 1, 3
        negatives = np.array([0, 2, 2, 4])

        g_center, g_out = sgns_event_grads(w_in, w_out, center, context, negatives)
        delta = 1e-6

        def loss():
            return sgns_event_loss(w_in, w_out, center, context, negatives)

        for d in range(dim):
            keep = w_in[center, d]
            w_in[center, d] = keep + delta
            hi = loss()
            w_in[center, d] = keep - delta
            lo = loss()
            w_in[center, d] = keep
            numeric = (hi - lo) / (2 * delta)
            assert abs(numeric - g_center[d]) / max(abs(numeric), abs(g_center[d]), 1e-8) < 1e-5

        for row, grad in g_out.items():
            for d in range(dim):
                keep = w_out[row, d]
                w_out[row, d] = keep + delta
                hi = loss()
                w_out[row, d] = keep - delta
                lo = loss()
                w_out[row, d] = keep
                numeric = (hi - lo) / (2 * delta)
                assert abs(numeric - grad[d]) / max(abs(numeric), abs(grad[d]), 1e-8) < 1e-5
