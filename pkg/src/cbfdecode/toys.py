"""Bundled toy world: a small sentiment vocabulary with matching models.

Everything here is word-level and deterministic, sized so that full
experiment sweeps finish in seconds.  The bigram model is trained on a
committed 200-sentence corpus; the adversarial predictor puts most of
its mass on negative-valence tokens so that constrained decoding has to
scan past them, which is what makes it useful for stress runs.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .core import Text, Vocabulary
from .lcf import LexiconLCF, load_lexicon
from .predictor import FixedPredictor, NGramModel, train_ngram

TOY_NEUTRAL = (
    "the", "a", "is", "was", "it", "we", "they", "and", "but", "very",
    "so", "quite", "day", "night", "morning", "story", "time", "walk",
    "rain", "end", "here", "there", "friend", "work", ".",
)
TOY_POSITIVE = (
    "good", "nice", "great", "happy", "love", "fun", "sunny", "bright",
    "kind", "sweet",
)
TOY_NEGATIVE = (
    "bad", "sad", "awful", "gloomy", "angry", "poor", "dark", "rough",
)

#: Share of predictor mass the adversarial toy puts on each group.
_ADVERSARIAL_MASS = {"negative": 0.90, "neutral": 0.09, "positive": 0.01}


def _data_path(name: str):
    return resources.files("cbfdecode").joinpath("data", name)


@lru_cache(maxsize=1)
def toy_vocabulary() -> Vocabulary:
    """43-token word vocabulary; no end-of-sequence token."""
    return Vocabulary(
        tokens=TOY_NEUTRAL + TOY_POSITIVE + TOY_NEGATIVE,
        separator=" ",
        eos_id=None,
        name="toy-sentiment",
    )


def toy_text(s: str) -> Text:
    """Tokenize a space-separated string against the toy vocabulary."""
    vocab = toy_vocabulary()
    return Text.from_ids(vocab, vocab.tokenize(s))


@lru_cache(maxsize=1)
def toy_lexicon() -> dict[str, float]:
    with resources.as_file(_data_path("toy_lexicon.tsv")) as p:
        return load_lexicon(p)


def toy_lexicon_lcf(window: int | str = "all", normalizer: float = 4.0) -> LexiconLCF:
    """Damped-average valence constraint over the toy lexicon.

    The normalizer keeps very short prefixes from swinging the score to
    its extremes on a single word.
    """
    return LexiconLCF(
        valence=toy_lexicon(), window=window, normalizer=normalizer,
        name="toy-lexicon",
    )


@lru_cache(maxsize=1)
def toy_corpus() -> tuple[Text, ...]:
    vocab = toy_vocabulary()
    with resources.as_file(_data_path("toy_corpus.txt")) as p:
        lines = p.read_text(encoding="utf-8").splitlines()
    return tuple(
        Text.from_ids(vocab, vocab.tokenize(line)) for line in lines if line.strip()
    )


@lru_cache(maxsize=4)
def toy_ngram(order: int = 2, alpha: float = 1.0) -> NGramModel:
    """Smoothed n-gram trained on the bundled corpus."""
    return train_ngram(toy_corpus(), order=order, alpha=alpha, vocab=toy_vocabulary())


def adversarial_predictor() -> FixedPredictor:
    """Context-free predictor massed on negative tokens.

    Negative tokens rank first, neutral second, positive last, so strict
    filtering at high gamma must wade through the whole hostile prefix
    of the ranking before finding anything admissible.
    """
    vocab = toy_vocabulary()
    probs = []
    for tok in vocab.tokens:
        if tok in TOY_NEGATIVE:
            probs.append(_ADVERSARIAL_MASS["negative"] / len(TOY_NEGATIVE))
        elif tok in TOY_POSITIVE:
            probs.append(_ADVERSARIAL_MASS["positive"] / len(TOY_POSITIVE))
        else:
            probs.append(_ADVERSARIAL_MASS["neutral"] / len(TOY_NEUTRAL))
    return FixedPredictor(vocab, probs)
