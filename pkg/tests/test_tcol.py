import numpy as np
import pytest

from agagi import corpus as cp
from agagi import tcol as tc


def encode_corpus(texts_labels, m=4):
    token_lists = [cp.tokenize(t) for t, _ in texts_labels]
    labels = [lab for _, lab in texts_labels]
    vocab = cp.build_vocab(token_lists)
    encoded = [cp.pad_encode(toks, vocab, m) for toks in token_lists]
    return encoded, labels, vocab


def brute_counts(texts_labels, n_classes):
    """Independent recount straight from the raw text."""
    counts = {}
    for text, label in texts_labels:
        for tok in cp.tokenize(text):
            counts.setdefault(tok, [0] * n_classes)[label] += 1
    return counts


class TestBuildTcol:
    CORPUS = [("good movie", 1), ("bad movie", 0), ("good good", 1)]

    def test_hand_counts(self):
        encoded, labels, vocab = encode_corpus(self.CORPUS)
        table = tc.build_tcol(zip(encoded, labels), 2, vocab)
        assert table.vector("good").tolist() == [0, 3]
        assert table.vector("movie").tolist() == [1, 1]
        assert table.vector("bad").tolist() == [1, 0]

    def test_empty_training_set(self):
        vocab = cp.build_vocab([["x"]])
        table = tc.build_tcol([], 2, vocab)
        assert table.counts == {}
        assert table.total() == 0

    def test_missing_word_is_zero_vector(self):
        encoded, labels, vocab = encode_corpus(self.CORPUS)
        table = tc.build_tcol(zip(encoded, labels), 2, vocab)
        assert table.vector("unseen").tolist() == [0, 0]

    def test_label_out_of_range(self):
        encoded, labels, vocab = encode_corpus([("good", 1)])
        with pytest.raises(ValueError):
            tc.build_tcol(zip(encoded, [5]), 2, vocab)

    def test_total_matches_non_pad_tokens(self):
        rng = np.random.default_rng(0)
        words = ["w%d" % i for i in range(12)]
        corpus = [
            (" ".join(words[i] for i in rng.integers(0, 12, size=rng.integers(1, 6))), int(rng.integers(0, 3)))
            for _ in range(40)
        ]
        m = 5
        encoded, labels, vocab = encode_corpus(corpus, m=m)
        table = tc.build_tcol(zip(encoded, labels), 3, vocab)
        non_pad = sum(1 for row in encoded for idx in row if idx != cp.PAD_INDEX)
        assert table.total() == non_pad

    def test_permutation_invariant(self):
        encoded, labels, vocab = encode_corpus(self.CORPUS)
        forward = tc.build_tcol(zip(encoded, labels), 2, vocab)
        backward = tc.build_tcol(zip(encoded[::-1], labels[::-1]), 2, vocab)
        assert forward == backward

    def test_matches_brute_force_recount(self):
        rng = np.random.default_rng(7)
        words = ["t%d" % i for i in range(15)]
        for _ in range(10):
            n = int(rng.integers(3, 30))
            corpus = [
                (" ".join(words[i] for i in rng.integers(0, 15, size=rng.integers(1, 7))), int(rng.integers(0, 2)))
                for _ in range(n)
            ]
            m = max(len(cp.tokenize(t)) for t, _ in corpus)
            encoded, labels, vocab = encode_corpus(corpus, m=m)
            table = tc.build_tcol(zip(encoded, labels), 2, vocab)
            expected = brute_counts(corpus, 2)
            assert set(table.counts) == set(expected)
            for word, vec in expected.items():
                assert table.vector(word).tolist() == vec


class TestSentenceTcol:
    def test_all_pad_is_zero(self):
        encoded, labels, vocab = encode_corpus(TestBuildTcol.CORPUS)
        table = tc.build_tcol(zip(encoded, labels), 2, vocab)
        out = tc.sentence_tcol([0, 0, 0], table, vocab)
        assert np.array_equal(out, np.zeros((2, 3)))

    def test_single_token_column(self):
        encoded, labels, vocab = encode_corpus(TestBuildTcol.CORPUS)
        table = tc.build_tcol(zip(encoded, labels), 2, vocab)
        out = tc.sentence_tcol([vocab.encode_token("good")], table, vocab)
        assert out[:, 0].tolist() == [0, 3]

    def test_one_label_word_single_row(self):
        encoded, labels, vocab = encode_corpus(TestBuildTcol.CORPUS)
        table = tc.build_tcol(zip(encoded, labels), 2, vocab)
        col = tc.sentence_tcol([vocab.encode_token("bad")], table, vocab)[:, 0]
        assert np.count_nonzero(col) == 1

    def test_unknown_column_is_zero(self):
        encoded, labels, vocab = encode_corpus(TestBuildTcol.CORPUS)
        table = tc.build_tcol(zip(encoded, labels), 2, vocab)
        out = tc.sentence_tcol([cp.UNK_INDEX], table, vocab)
        assert np.array_equal(out, np.zeros((2, 1)))

    def test_index_matrix_agrees_with_lookups(self):
        encoded, labels, vocab = encode_corpus(TestBuildTcol.CORPUS)
        table = tc.build_tcol(zip(encoded, labels), 2, vocab)
        mat = table.index_matrix(vocab)
        for idx, tok in enumerate(vocab.index_to_token):
            if idx in (cp.PAD_INDEX, cp.UNK_INDEX):
                assert np.all(mat[idx] == 0)
            else:
                assert mat[idx].tolist() == table.vector(tok).tolist()


class TestNormalize:
    def test_division(self):
        out = tc.normalize_tcol(np.array([[10.0], [0.0]]), 5)
        assert out[:, 0].tolist() == [2.0, 0.0]

    def test_zero_matrix(self):
        assert np.all(tc.normalize_tcol(np.zeros((2, 3)), 7) == 0)

    def test_unit_divisor(self):
        mat = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(tc.normalize_tcol(mat, 1), mat)

    def test_zero_divisor_rejected(self):
        with pytest.raises(ValueError):
            tc.normalize_tcol(np.zeros((2, 2)), 0)

    def test_bounded_by_max_over_v(self):
        rng = np.random.default_rng(1)
        mat = rng.integers(0, 50, size=(3, 8))
        out = tc.normalize_tcol(mat, 10)
        assert np.all(out >= 0)
        assert out.max() <= mat.max() / 10 + 1e-12


class TestSaveLoad:
    def test_round_trip(self, tmp_path):
        encoded, labels, vocab = encode_corpus(TestBuildTcol.CORPUS)
        table = tc.build_tcol(zip(encoded, labels), 2, vocab)
        path = str(tmp_path / "tcol.tsv")
        tc.save_tcol(table, path)
        assert tc.load_tcol(path) == table

    def test_empty_table_round_trip(self, tmp_path):
        vocab = cp.build_vocab([["x"]])
        table = tc.build_tcol([], 2, vocab)
        path = str(tmp_path / "tcol.tsv")
        tc.save_tcol(table, path)
        loaded = tc.load_tcol(path)
        assert loaded == table

    def test_wrong_vector_length(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("#classes=2 vocab=5\ngood\t1\t2\t3\n", encoding="utf-8")
        with pytest.raises(tc.CorpusError, match="line 2"):
            tc.load_tcol(str(path))

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("classes 2\n", encoding="utf-8")
        with pytest.raises(tc.CorpusError, match="header"):
            tc.load_tcol(str(path))
