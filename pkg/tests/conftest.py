"""Shared fixtures and tiny test doubles."""

from __future__ import annotations

import numpy as np
import pytest

from cbfdecode.core import Text, TokenDistribution, Vocabulary
from cbfdecode.predictor import TokenPredictor
from cbfdecode.toys import toy_lexicon_lcf, toy_ngram, toy_text, toy_vocabulary


class TablePredictor(TokenPredictor):
    """Predictor defined by an explicit context -> distribution table.

    Contexts are token-id tuples matched against the full text; missing
    contexts fall back to the ``default`` distribution.  Handy for tests
    that need exact, hand-written conditional probabilities.
    """

    def __init__(self, vocab: Vocabulary,
                 table: dict[tuple[int, ...], list[float]],
                 default: list[float]):
        self.vocab = vocab
        self._table = {
            ctx: TokenDistribution.validated(np.asarray(probs, dtype=np.float64))
            for ctx, probs in table.items()
        }
        self._default = TokenDistribution.validated(
            np.asarray(default, dtype=np.float64)
        )

    def predict(self, x: Text) -> TokenDistribution:
        return self._table.get(x.ids, self._default)


@pytest.fixture(scope="session")
def vocab():
    return toy_vocabulary()


@pytest.fixture(scope="session")
def lcf():
    return toy_lexicon_lcf()


@pytest.fixture(scope="session")
def ngram():
    return toy_ngram()


@pytest.fixture()
def text_of():
    return toy_text
