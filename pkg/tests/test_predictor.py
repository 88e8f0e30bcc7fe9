import json

import numpy as np
import pytest

from cbfdecode.core import Text, Vocabulary
from cbfdecode.errors import NumericInputError, SpecFormatError, TrainingInputError
from cbfdecode.predictor import (
    FixedPredictor,
    NGramModel,
    PagedPrediction,
    UniformPredictor,
    train_ngram,
)


@pytest.fixture
def small_vocab():
    return Vocabulary(tokens=("a", "b", "c", "d"))


class TestPagedPrediction:
    def test_rejects_unsorted_entries(self):
        with pytest.raises(NumericInputError):
            PagedPrediction(entries=((1, 0.2), (2, 0.5)), offset=0, remaining_mass=0.3)

    def test_rejects_tie_with_descending_id(self):
        with pytest.raises(NumericInputError):
            PagedPrediction(entries=((3, 0.5), (1, 0.5)), offset=0, remaining_mass=0.0)

    def test_first_page_mass_must_reach_one(self):
        with pytest.raises(NumericInputError):
            PagedPrediction(entries=((1, 0.5),), offset=0, remaining_mass=0.1)
        PagedPrediction(entries=((1, 0.5),), offset=0, remaining_mass=0.5)

    def test_later_page_mass_may_undershoot(self):
        PagedPrediction(entries=((4, 0.1),), offset=2, remaining_mass=0.0)

    def test_negative_offset_rejected(self):
        with pytest.raises(NumericInputError):
            PagedPrediction(entries=(), offset=-1, remaining_mass=0.0)


class TestDefaultPaging:
    """The ABC's predict_topm must agree with predict on any backend."""

    def test_single_full_page(self, small_vocab):
        g = FixedPredictor(small_vocab, [0.4, 0.3, 0.2, 0.1])
        page = g.predict_topm(small_vocab.text(), offset=0, m=4)
        assert [tid for tid, _ in page.entries] == [1, 2, 3, 4]
        assert page.remaining_mass == 0.0

    def test_pages_partition_the_ranking(self, small_vocab):
        g = FixedPredictor(small_vocab, [0.1, 0.4, 0.2, 0.3])
        x = small_vocab.text()
        first = g.predict_topm(x, offset=0, m=2)
        second = g.predict_topm(x, offset=2, m=2)
        ids = [tid for tid, _ in first.entries + second.entries]
        assert ids == [2, 4, 3, 1]
        probs = [p for _, p in first.entries + second.entries]
        assert probs == sorted(probs, reverse=True)
        assert first.remaining_mass == pytest.approx(0.3, abs=1e-15)
        assert second.remaining_mass == 0.0

    def test_offset_past_vocabulary_is_empty(self, small_vocab):
        g = UniformPredictor(small_vocab)
        page = g.predict_topm(small_vocab.text(), offset=4, m=2)
        assert page.entries == ()
        assert page.remaining_mass == 0.0

    def test_tie_ranks_ascend_by_id(self, small_vocab):
        g = FixedPredictor(small_vocab, [0.25, 0.25, 0.25, 0.25])
        page = g.predict_topm(small_vocab.text(), offset=0, m=4)
        assert [tid for tid, _ in page.entries] == [1, 2, 3, 4]

    def test_bad_arguments(self, small_vocab):
        g = UniformPredictor(small_vocab)
        with pytest.raises(NumericInputError):
            g.predict_topm(small_vocab.text(), offset=-1, m=1)
        with pytest.raises(NumericInputError):
            g.predict_topm(small_vocab.text(), offset=0, m=0)


class TestFixedPredictor:
    def test_context_independent(self, small_vocab):
        g = FixedPredictor(small_vocab, [0.7, 0.1, 0.1, 0.1])
        a = g.predict(small_vocab.text())
        b = g.predict(small_vocab.text((1, 2, 3)))
        np.testing.assert_array_equal(a.probs, b.probs)

    def test_requires_strictly_positive(self, small_vocab):
        with pytest.raises(NumericInputError):
            FixedPredictor(small_vocab, [0.0, 0.5, 0.3, 0.2])

    def test_size_must_match_vocab(self, small_vocab):
        with pytest.raises(NumericInputError):
            FixedPredictor(small_vocab, [0.5, 0.5])


class TestUniformPredictor:
    def test_every_entry_equal(self, small_vocab):
        d = UniformPredictor(small_vocab).predict(small_vocab.text())
        np.testing.assert_allclose(d.probs, 0.25, atol=1e-15)


def two_token_corpus():
    v = Vocabulary(tokens=("a", "b"))
    return v, [Text.from_ids(v, v.tokenize("a a b"))]


class TestNGramModel:
    def test_unigram_add_one_counts(self):
        v, corpus = two_token_corpus()
        model = train_ngram(corpus, order=1, alpha=1.0)
        d = model.predict(v.text())
        assert d.prob(1) == pytest.approx(3 / 5, abs=1e-15)
        assert d.prob(2) == pytest.approx(2 / 5, abs=1e-15)

    def test_bigram_contexts(self):
        v, corpus = two_token_corpus()
        model = train_ngram(corpus, order=2, alpha=1.0)
        after_a = model.predict(v.text((1,)))
        # context "a" saw one "a" and one "b"
        assert after_a.prob(1) == pytest.approx(2 / 4, abs=1e-15)
        assert after_a.prob(2) == pytest.approx(2 / 4, abs=1e-15)

    def test_unseen_context_backs_off_to_marginal(self):
        v, corpus = two_token_corpus()
        model = train_ngram(corpus, order=2, alpha=1.0)
        after_b = model.predict(v.text((2,)))
        empty = model.predict(v.text())
        # both fall back to the corpus marginal {a: 2, b: 1}
        assert after_b.prob(1) == pytest.approx(3 / 5, abs=1e-15)
        np.testing.assert_array_equal(after_b.probs, empty.probs)

    def test_context_window_is_order_minus_one(self):
        v, corpus = two_token_corpus()
        model = train_ngram(corpus, order=2, alpha=1.0)
        assert model.context_of(v.text((2, 2, 1))) == (1,)
        long_ctx = model.predict(v.text((2, 2, 1)))
        short_ctx = model.predict(v.text((1,)))
        np.testing.assert_array_equal(long_ctx.probs, short_ctx.probs)

    def test_predictions_strictly_positive(self):
        v, corpus = two_token_corpus()
        model = train_ngram(corpus, order=3, alpha=0.5)
        for ids in [(), (1,), (2, 2), (1, 2)]:
            assert np.all(model.predict(v.text(ids)).probs > 0.0)

    def test_save_load_round_trip(self, tmp_path):
        v, corpus = two_token_corpus()
        model = train_ngram(corpus, order=2, alpha=1.0)
        path = tmp_path / "model.json"
        model.save(path)
        back = NGramModel.load(path)
        assert back.vocab.tokens == v.tokens
        assert back.order == 2 and back.smoothing_alpha == 1.0
        for ids in [(), (1,), (2,)]:
            np.testing.assert_array_equal(
                back.predict(v.text(ids)).probs,
                model.predict(v.text(ids)).probs,
            )

    def test_save_is_byte_deterministic(self, tmp_path):
        v, corpus = two_token_corpus()
        model = train_ngram(corpus, order=2, alpha=1.0)
        model.save(tmp_path / "m1.json")
        model.save(tmp_path / "m2.json")
        assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()

    def test_load_rejects_wrong_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": "other", "version": 1}))
        with pytest.raises(SpecFormatError):
            NGramModel.load(path)

    def test_load_rejects_wrong_version(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": NGramModel.FORMAT, "version": 99}))
        with pytest.raises(SpecFormatError):
            NGramModel.load(path)

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(SpecFormatError):
            NGramModel.load(path)
        with pytest.raises(SpecFormatError):
            NGramModel.load(tmp_path / "missing.json")


class TestTrainNgram:
    def test_empty_corpus_rejected(self):
        with pytest.raises(TrainingInputError):
            train_ngram([], order=2, alpha=1.0)

    def test_bad_hyperparameters_rejected(self):
        v, corpus = two_token_corpus()
        with pytest.raises(TrainingInputError):
            train_ngram(corpus, order=0, alpha=1.0)
        with pytest.raises(TrainingInputError):
            train_ngram(corpus, order=2, alpha=0.0)

    def test_short_texts_still_feed_marginal(self):
        v = Vocabulary(tokens=("a", "b"))
        corpus = [v.text((1,)), v.text((2,))]
        model = train_ngram(corpus, order=3, alpha=1.0)
        d = model.predict(v.text())
        assert d.prob(1) == pytest.approx(0.5)
        assert model.counts == {}
