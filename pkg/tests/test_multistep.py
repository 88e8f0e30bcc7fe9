import math

import numpy as np
import pytest

from cbfdecode.core import Vocabulary
from cbfdecode.errors import InfeasibleHorizonError, NumericInputError
from cbfdecode.lcf import ConstantLCF, LexiconLCF
from cbfdecode.multistep import (
    ATTEMPT_FACTOR,
    MultiStepConfig,
    TokenBlock,
    block_probability,
    blockwise_best_of_k_step,
    candidate_weights,
    extend,
    multistep_step,
    sample_block,
)
from cbfdecode.predictor import FixedPredictor
from cbfdecode.sampling import MULTISTEP_STREAM, derived_rng

from conftest import TablePredictor
from oracles import enumerate_blocks, restricted_block_distribution, total_variation


@pytest.fixture
def ab_vocab():
    return Vocabulary(tokens=("a", "b"))


@pytest.fixture
def ab_h():
    return LexiconLCF({"a": 1.0, "b": -1.0}, normalizer=1.0)


def context_table(ab_vocab):
    # after "a" the model leans a-ward, after "b" b-ward
    return TablePredictor(
        ab_vocab,
        {
            (1,): [0.7, 0.3],
            (1, 1): [0.6, 0.4],
            (1, 2): [0.5, 0.5],
        },
        default=[0.5, 0.5],
    )


class TestTokenBlock:
    def test_rejects_empty_block(self):
        with pytest.raises(NumericInputError):
            TokenBlock(tokens=(), logprob=-1.0)

    def test_rejects_positive_or_nonfinite_logprob(self):
        with pytest.raises(NumericInputError):
            TokenBlock(tokens=(1,), logprob=0.5)
        with pytest.raises(NumericInputError):
            TokenBlock(tokens=(1,), logprob=-math.inf)

    def test_zero_logprob_allowed(self):
        assert TokenBlock(tokens=(1,), logprob=0.0).h_end is None


class TestMultiStepConfig:
    def test_attempt_budget_defaults(self):
        cfg = MultiStepConfig(horizon=2, sample_size=4, gamma=0.5)
        assert cfg.max_attempts == ATTEMPT_FACTOR * 4

    @pytest.mark.parametrize("kwargs", [
        {"horizon": 0, "sample_size": 1, "gamma": 0.5},
        {"horizon": 1, "sample_size": 0, "gamma": 0.5},
        {"horizon": 1, "sample_size": 1, "gamma": 1.5},
        {"horizon": 1, "sample_size": 4, "gamma": 0.5, "max_attempts": 3},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(NumericInputError):
            MultiStepConfig(**kwargs)


class TestExtend:
    def test_appends_in_order(self, ab_vocab):
        x = extend(ab_vocab.text(), (1, 2, 1))
        assert x.ids == (1, 2, 1)
        assert x.rendered == "a b a"


class TestSampleBlock:
    def test_logprob_matches_chain_rule(self, ab_vocab):
        g = context_table(ab_vocab)
        rng = derived_rng(11, MULTISTEP_STREAM)
        x = ab_vocab.text((1,))
        block = sample_block(g, x, horizon=2, rng=rng)
        assert len(block.tokens) == 2
        direct = block_probability(g, x, block)
        assert math.exp(block.logprob) == pytest.approx(direct, rel=1e-12)

    def test_deterministic_under_seed(self, ab_vocab):
        g = context_table(ab_vocab)
        x = ab_vocab.text((1,))
        a = [sample_block(g, x, 3, derived_rng(5, MULTISTEP_STREAM)).tokens
             for _ in range(1)]
        b = [sample_block(g, x, 3, derived_rng(5, MULTISTEP_STREAM)).tokens
             for _ in range(1)]
        assert a == b

    def test_consumes_one_variate_per_token(self, ab_vocab):
        g = context_table(ab_vocab)
        x = ab_vocab.text((1,))
        rng1 = derived_rng(9, MULTISTEP_STREAM)
        sample_block(g, x, horizon=4, rng=rng1)
        rng2 = derived_rng(9, MULTISTEP_STREAM)
        rng2.random(4)
        assert rng1.random() == rng2.random()

    def test_empirical_frequencies_match_model(self, ab_vocab):
        g = FixedPredictor(ab_vocab, [0.8, 0.2])
        rng = np.random.default_rng(3)
        x = ab_vocab.text()
        hits = sum(sample_block(g, x, 1, rng).tokens == (1,) for _ in range(4000))
        assert hits / 4000 == pytest.approx(0.8, abs=0.02)


class TestCandidateWeights:
    def test_proportional_to_probability(self):
        cands = (TokenBlock((1,), math.log(0.2)), TokenBlock((2,), math.log(0.6)))
        w = candidate_weights(cands)
        np.testing.assert_allclose(w, [0.25, 0.75], atol=1e-12)

    def test_extreme_logprobs_stay_finite(self):
        cands = (TokenBlock((1,), -2000.0), TokenBlock((2,), -2001.0))
        w = candidate_weights(cands)
        assert np.all(np.isfinite(w))
        assert w.sum() == pytest.approx(1.0)
        assert w[0] > w[1]


class TestMultistepStep:
    def test_every_selected_block_satisfies_constraint(self, ab_vocab, ab_h):
        g = context_table(ab_vocab)
        cfg = MultiStepConfig(horizon=2, sample_size=3, gamma=0.2)
        x = ab_vocab.text((1,))
        base = ab_h.evaluate(x)
        for seed in range(25):
            block, stats = multistep_step(g, x, ab_h, cfg, derived_rng(seed, MULTISTEP_STREAM))
            endpoint = ab_h.evaluate(extend(x, block.tokens))
            assert endpoint >= cfg.gamma * base
            assert block.h_end == endpoint
            assert stats.attempts == stats.rejections + len(stats.candidates)
            assert len(stats.candidates) == cfg.sample_size

    def test_deterministic_under_seed(self, ab_vocab, ab_h):
        g = context_table(ab_vocab)
        cfg = MultiStepConfig(horizon=2, sample_size=4, gamma=0.2)
        x = ab_vocab.text((1,))
        r1 = multistep_step(g, x, ab_h, cfg, derived_rng(42, MULTISTEP_STREAM))
        r2 = multistep_step(g, x, ab_h, cfg, derived_rng(42, MULTISTEP_STREAM))
        assert r1[0] == r2[0]
        assert r1[1] == r2[1]

    def test_budget_exhaustion_carries_partial_harvest(self, ab_vocab, ab_h):
        g = context_table(ab_vocab)
        # gamma 1 from h=1 needs endpoint 1, i.e. the block "a a";
        # a tiny budget makes exhaustion likely but partial finds possible
        cfg = MultiStepConfig(horizon=2, sample_size=5, gamma=1.0, max_attempts=6)
        x = ab_vocab.text((1,))
        with pytest.raises(InfeasibleHorizonError) as exc:
            multistep_step(g, x, ab_h, cfg, derived_rng(0, MULTISTEP_STREAM))
        assert exc.value.attempts == 6
        assert exc.value.required == 5
        assert len(exc.value.candidates) < 5
        for cand in exc.value.candidates:
            assert ab_h.evaluate(extend(x, cand.tokens)) >= 1.0

    def test_impossible_constraint_rejects_everything(self, ab_vocab):
        g = context_table(ab_vocab)

        class Sinking(ConstantLCF):
            def evaluate(self, x):
                return -float(len(x))

        cfg = MultiStepConfig(horizon=2, sample_size=1, gamma=0.0, max_attempts=10)
        # base is negative and every continuation sinks further; gamma * base
        # stays above every endpoint, so nothing is ever accepted
        with pytest.raises(InfeasibleHorizonError) as exc:
            multistep_step(g, ab_vocab.text((2,)), Sinking(0.0), cfg,
                           derived_rng(1, MULTISTEP_STREAM))
        assert exc.value.candidates == ()
        assert exc.value.attempts == 10

    def test_selection_matches_restricted_distribution(self, ab_vocab, ab_h):
        # with one candidate per step the chosen block is an exact draw
        # from the endpoint-restricted block distribution
        g = context_table(ab_vocab)
        cfg = MultiStepConfig(horizon=2, sample_size=1, gamma=0.2)
        x = ab_vocab.text((1,))
        target = restricted_block_distribution(g, x, ab_h, gamma=0.2, horizon=2)
        rng = derived_rng(7, MULTISTEP_STREAM)
        counts = {}
        trials = 20000
        for _ in range(trials):
            block, _ = multistep_step(g, x, ab_h, cfg, rng)
            counts[block.tokens] = counts.get(block.tokens, 0) + 1
        empirical = {k: v / trials for k, v in counts.items()}
        assert total_variation(empirical, target) < 0.03


class TestBestOfK:
    def test_picks_highest_endpoint(self, ab_vocab, ab_h):
        g = context_table(ab_vocab)
        x = ab_vocab.text((1,))
        best, stats = blockwise_best_of_k_step(g, x, ab_h, horizon=2,
                                               sample_size=6,
                                               rng=derived_rng(2, MULTISTEP_STREAM))
        assert stats.rejections == 0
        assert stats.attempts == 6
        assert best.h_end == max(c.h_end for c in stats.candidates)

    def test_tie_breaks_prefer_likelier_then_smaller(self):
        v = Vocabulary(tokens=("a", "b"))
        # h constant: every endpoint ties, so selection is purely tie-break
        g = TablePredictor(v, {}, default=[0.75, 0.25])
        h = ConstantLCF(1.0)
        best, stats = blockwise_best_of_k_step(g, v.text(), h, horizon=1,
                                               sample_size=8,
                                               rng=np.random.default_rng(0))
        by_rule = sorted(stats.candidates,
                         key=lambda c: (-c.h_end, -c.logprob, c.tokens))[0]
        assert best == by_rule
        # "a" is both likelier and smaller, so it must win if present
        if any(c.tokens == (1,) for c in stats.candidates):
            assert best.tokens == (1,)

    def test_can_select_constraint_violating_block(self, ab_vocab, ab_h):
        # model leans hard toward "b b", whose endpoint fails gamma = 1
        g = TablePredictor(ab_vocab, {}, default=[0.05, 0.95])
        x = ab_vocab.text((1,))
        base = ab_h.evaluate(x)
        violated = False
        for seed in range(30):
            best, _ = blockwise_best_of_k_step(g, x, ab_h, horizon=2,
                                               sample_size=1,
                                               rng=np.random.default_rng(seed))
            if best.h_end < 1.0 * base:
                violated = True
                break
        assert violated


class TestBlockProbability:
    def test_matches_enumeration(self, ab_vocab):
        g = context_table(ab_vocab)
        x = ab_vocab.text((1,))
        table = enumerate_blocks(g, x, horizon=2)
        assert sum(table.values()) == pytest.approx(1.0, abs=1e-12)
        for tokens, prob in table.items():
            direct = block_probability(g, x, TokenBlock(tokens, logprob=-1.0))
            assert direct == pytest.approx(prob, rel=1e-12)
