import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DATA, RT_SNIPPETS
from qpdn.data import (
    OOV,
    DataError,
    Dataset,
    build_vocab,
    cv_splits,
    idf_weights,
    load_dataset,
    load_pretrained,
    tokenize,
)

IDF_ONE_OF_THREE = 1.6931471805599454


def golden_tokens():
    rows = []
    for line in (DATA / "tokenize_golden.tsv").read_text(encoding="utf-8").splitlines():
        text, _, expected = line.partition("\t")
        rows.append((text, expected.split("|") if expected else []))
    return rows


class TestTokenize:
    def test_stated_rule(self):
        assert tokenize("Ivory tower.") == ["ivory", "tower", "."]

    def test_empty(self):
        assert tokenize("") == []

    @pytest.mark.parametrize("text,expected", golden_tokens())
    def test_golden(self, text, expected):
        assert tokenize(text) == expected

    @given(st.text(max_size=60))
    def test_idempotent_on_rejoined_tokens(self, text):
        tokens = tokenize(text)
        assert tokenize(" ".join(tokens)) == tokens


class TestVocab:
    def test_frequency_order(self):
        v = build_vocab([["a", "a", "b"]])
        assert v.itos == [OOV, "a", "b"]
        assert v.encode(["b", "a", "zzz"]) == [2, 1, 0]

    def test_min_count(self):
        v = build_vocab([["a", "a", "b"]], min_count=2)
        assert v.itos == [OOV, "a"]
        assert v.encode(["b"]) == [0]

    def test_ties_lexicographic(self):
        assert build_vocab([["c", "b", "a", "c"]]).itos == [OOV, "c", "a", "b"]

    def test_document_frequency(self):
        v = build_vocab([["a", "a"], ["a", "b"], ["c"]], min_count=2)
        assert v.n_docs == 3
        np.testing.assert_array_equal(v.doc_freq, [2, 2])

    def test_empty_corpus(self):
        with pytest.raises(DataError):
            build_vocab([])


class TestIdf:
    corpus = [["a", "b"], ["a"], ["a", "c"]]

    def test_token_everywhere(self):
        v = build_vocab(self.corpus)
        assert idf_weights(self.corpus, v)[v.stoi["a"]] == pytest.approx(1.0, abs=1e-15)

    def test_unseen(self):
        v = build_vocab(self.corpus)
        assert idf_weights(self.corpus, v)[0] == pytest.approx(math.log(4) + 1, abs=1e-15)

    def test_one_of_three(self):
        v = build_vocab(self.corpus)
        assert idf_weights(self.corpus, v)[v.stoi["b"]] == pytest.approx(IDF_ONE_OF_THREE, abs=1e-15)

    def test_stored_frequencies_agree(self):
        v = build_vocab(self.corpus)
        np.testing.assert_array_equal(idf_weights(None, v), idf_weights(self.corpus, v))

    @given(st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=5), min_size=1, max_size=12))
    def test_positive_and_monotone(self, corpus):
        v = build_vocab(corpus)
        idf = idf_weights(corpus, v)
        assert np.all(idf > 0)
        order = np.argsort(v.doc_freq, kind="stable")
        assert np.all(np.diff(idf[order]) <= 1e-15)


class TestPretrained:
    def test_fixture_file(self, separable):
        init = load_pretrained(DATA / "vectors10.txt", separable.vocab, 4)
        assert init.found == 10
        assert init.coverage == pytest.approx(10 / len(separable.vocab))
        np.testing.assert_allclose(np.linalg.norm(init.amplitudes, axis=0), 1.0, atol=1e-12)
        assert np.all(init.amplitudes >= 0)
        assert init.phase_offsets is None

    def test_abs_then_normalize(self, separable):
        init = load_pretrained(DATA / "vectors10.txt", separable.vocab, 4)
        np.testing.assert_allclose(init.amplitudes[:, separable.vocab.stoi["movie"]], [0.6, 0.8, 0, 0], atol=1e-15)

    def test_missing_word_uniform(self, separable):
        init = load_pretrained(DATA / "vectors10.txt", separable.vocab, 4)
        np.testing.assert_array_equal(init.amplitudes[:, separable.vocab.stoi["poor"]], [0.5] * 4)

    def test_sign_into_phase(self, separable):
        init = load_pretrained(DATA / "vectors10.txt", separable.vocab, 4, sign_mode="phase")
        np.testing.assert_array_equal(init.phase_offsets[:, separable.vocab.stoi["good"]], [0, math.pi, 0, math.pi])

    def test_dimension_mismatch_names_line(self, separable, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("good 1 2 3 4\nbad 1 2 3\n")
        with pytest.raises(DataError, match=":2:"):
            load_pretrained(path, separable.vocab, 4)

    def test_malformed_number(self, separable, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("good 1 2 x 4\n")
        with pytest.raises(DataError, match=":1:"):
            load_pretrained(path, separable.vocab, 4)


class TestDataset:
    def test_tiny_file(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("1\tgreat movie\n0\tterrible plot\n")
        ds = load_dataset(path)
        assert len(ds) == 2 and ds.n_labels == 2
        assert ds.label_names == ["1", "0"]
        np.testing.assert_array_equal(ds.labels, [0, 1])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("")
        with pytest.raises(DataError, match="no examples"):
            load_dataset(path)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("pos\tfine\nno tab here\n")
        with pytest.raises(DataError, match=":2:"):
            load_dataset(path)

    def test_eval_mode(self, separable, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("neg\tunseen words good\n")
        ds = load_dataset(path, vocab=separable.vocab, label_names=separable.label_names)
        assert ds.sentences == [[0, 0, separable.vocab.stoi["good"]]]
        path.write_text("meh\tgood\n")
        with pytest.raises(DataError, match="meh"):
            load_dataset(path, vocab=separable.vocab, label_names=separable.label_names)

    def test_empty_text_gets_oov(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("a\tx\nb\t\n")
        assert load_dataset(path).sentences[1] == [0]

    def test_invariants(self, separable):
        assert all(0 <= t < len(separable.vocab) for s in separable.sentences for t in s)
        assert separable.labels.max() < separable.n_labels
        sub = separable.subset([3, 1])
        assert isinstance(sub, Dataset) and sub.sentences == [separable.sentences[3], separable.sentences[1]]

    @pytest.mark.skipif(not RT_SNIPPETS.exists(), reason="RT snippet corpus not prepared")
    def test_review_corpus_vocabulary_size(self):
        ds = load_dataset(RT_SNIPPETS)
        assert 0.85 * 20_000 <= len(ds.vocab) <= 1.15 * 20_000
        assert len(ds) > 10_000


class TestFolds:
    def test_ten_of_ten(self):
        assert sorted(np.bincount(cv_splits(10, 10))) == [1] * 10

    def test_uneven(self):
        assert sorted(np.bincount(cv_splits(103, 10))) == [10] * 7 + [11] * 3

    def test_deterministic(self):
        np.testing.assert_array_equal(cv_splits(50, 5, seed=3), cv_splits(50, 5, seed=3))
        assert not np.array_equal(cv_splits(50, 5, seed=3), cv_splits(50, 5, seed=4))

    def test_too_many_folds(self):
        with pytest.raises(DataError):
            cv_splits(9, 10)

    @given(st.integers(2, 300), st.integers(2, 12), st.integers(0, 100))
    def test_partition(self, n, k, seed):
        if k > n:
            return
        folds = cv_splits(n, k, seed)
        assert folds.shape == (n,)
        assert set(folds.tolist()) == set(range(k))
        counts = np.bincount(folds)
        assert counts.max() - counts.min() <= 1
