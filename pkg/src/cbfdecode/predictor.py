"""Token predictor backends: uniform, fixed, trainable n-gram, and paging.

A predictor maps a text to a full probability distribution over the next
token.  Local backends are immutable after construction and deterministic to
the last bit; the remote client in :mod:`cbfdecode.remote` implements the
same interface over a wire protocol.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Text, TokenDistribution, TokenId, Vocabulary
from .errors import NumericInputError, SpecFormatError, TrainingInputError

PAGE_SUM_TOL = 1e-6


@dataclass(frozen=True)
class PagedPrediction:
    """One page of a descending-sorted prediction.

    ``entries`` holds ranks ``offset+1 .. offset+len(entries)`` as
    ``(token_id, probability)`` pairs, non-increasing by probability with
    ties broken by ascending token id.  ``remaining_mass`` is the total
    probability of all ranks after the page end, so it is 0 for a page that
    reaches past the vocabulary and ``sum(probs) + remaining_mass == 1``
    holds exactly when ``offset == 0``.
    """

    entries: tuple[tuple[TokenId, float], ...]
    offset: int
    remaining_mass: float

    def __post_init__(self):
        if self.offset < 0:
            raise NumericInputError(f"offset must be >= 0, got {self.offset}")
        if not (0.0 <= self.remaining_mass <= 1.0 + PAGE_SUM_TOL):
            raise NumericInputError(f"remaining_mass {self.remaining_mass} outside [0, 1]")
        prev: Optional[tuple[TokenId, float]] = None
        for tid, prob in self.entries:
            if prev is not None:
                if prob > prev[1] or (prob == prev[1] and tid <= prev[0]):
                    raise NumericInputError("page entries must be sorted descending, ties by id")
            prev = (tid, prob)
        total = sum(p for _, p in self.entries) + self.remaining_mass
        if total > 1.0 + PAGE_SUM_TOL:
            raise NumericInputError(f"page mass {total} exceeds 1")
        if self.offset == 0 and abs(total - 1.0) > PAGE_SUM_TOL:
            raise NumericInputError(f"first page mass {total} != 1 within {PAGE_SUM_TOL}")


class TokenPredictor(ABC):
    """Interface for next-token distribution backends."""

    vocab: Vocabulary
    supports_full_distribution: bool = True
    supports_paged_topm: bool = True
    #: preferred page size for consumers that iterate via predict_topm
    page_size: int = 64

    @abstractmethod
    def predict(self, x: Text) -> TokenDistribution:
        """Full next-token distribution following ``x``."""

    def predict_topm(self, x: Text, offset: int, m: int) -> PagedPrediction:
        """Ranks ``offset+1 .. offset+m`` of the descending-sorted prediction.

        Page boundaries are stable across calls for the same text.  An offset
        at or past the vocabulary size yields an empty page with zero
        remaining mass.
        """
        if offset < 0:
            raise NumericInputError(f"offset must be >= 0, got {offset}")
        if m < 1:
            raise NumericInputError(f"page size must be >= 1, got {m}")
        dist = self.predict(x)
        order = dist.argsort_desc()
        page_ids = order[offset:offset + m]
        entries = tuple((int(tid), float(dist.probs[tid - 1])) for tid in page_ids)
        tail = order[offset + m:]
        remaining = float(dist.probs[tail - 1].sum()) if tail.size else 0.0
        return PagedPrediction(entries=entries, offset=offset, remaining_mass=remaining)


class UniformPredictor(TokenPredictor):
    """Assigns probability 1/N to every token regardless of context."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._dist = TokenDistribution.validated(np.full(vocab.size, 1.0 / vocab.size))

    def predict(self, x: Text) -> TokenDistribution:
        return self._dist


class FixedPredictor(TokenPredictor):
    """Returns one fixed, strictly positive distribution for every context."""

    def __init__(self, vocab: Vocabulary, probs: Sequence[float]):
        arr = np.asarray(probs, dtype=np.float64)
        if arr.size != vocab.size:
            raise NumericInputError(f"expected {vocab.size} probabilities, got {arr.size}")
        if np.any(arr <= 0.0):
            raise NumericInputError("fixed predictor probabilities must be strictly positive")
        self.vocab = vocab
        self._dist = TokenDistribution.validated(arr)

    def predict(self, x: Text) -> TokenDistribution:
        return self._dist


class NGramModel(TokenPredictor):
    """Add-alpha smoothed n-gram model.

    ``counts`` maps each (order-1)-token context to its next-token count
    table.  Contexts never seen in training (including any prefix shorter
    than order-1 tokens) back off to the smoothed corpus-wide marginal, so
    every conditional distribution is strictly positive and generation can
    never dead-end.
    """

    FORMAT = "cbfdecode-ngram"
    VERSION = 1

    def __init__(self, vocab: Vocabulary, order: int, alpha: float,
                 counts: dict[tuple[TokenId, ...], dict[TokenId, int]],
                 marginal: dict[TokenId, int]):
        if order < 1:
            raise TrainingInputError(f"order must be >= 1, got {order}")
        if not (alpha > 0):
            raise TrainingInputError(f"smoothing alpha must be positive, got {alpha}")
        self.vocab = vocab
        self.order = order
        self.smoothing_alpha = float(alpha)
        self.counts = counts
        self.marginal = marginal
        self._cache: dict[tuple[TokenId, ...], TokenDistribution] = {}

    def _smoothed(self, table: dict[TokenId, int]) -> TokenDistribution:
        n = self.vocab.size
        arr = np.full(n, self.smoothing_alpha, dtype=np.float64)
        for tid, c in table.items():
            arr[tid - 1] += c
        arr /= arr.sum()
        return TokenDistribution.validated(arr, support_hint=n)

    def context_of(self, x: Text) -> tuple[TokenId, ...]:
        if self.order == 1:
            return ()
        return tuple(x.ids[-(self.order - 1):])

    def predict(self, x: Text) -> TokenDistribution:
        ctx = self.context_of(x)
        cached = self._cache.get(ctx)
        if cached is not None:
            return cached
        table = self.counts.get(ctx) if len(ctx) == self.order - 1 else None
        if table is None:
            table = self.marginal
        dist = self._smoothed(table)
        self._cache[ctx] = dist
        return dist

    def save(self, path: str | Path) -> None:
        """Write the model as deterministic JSON (schema in the README)."""
        doc = {
            "format": self.FORMAT,
            "version": self.VERSION,
            "order": self.order,
            "alpha": self.smoothing_alpha,
            "vocab": {
                "tokens": list(self.vocab.tokens),
                "separator": self.vocab.separator,
                "eos_id": self.vocab.eos_id,
                "name": self.vocab.name,
            },
            "marginal": sorted(self.marginal.items()),
            "counts": [
                [list(ctx), sorted(table.items())]
                for ctx, table in sorted(self.counts.items())
            ],
        }
        Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NGramModel":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecFormatError(f"cannot read n-gram model {path}: {exc}") from exc
        if doc.get("format") != cls.FORMAT or doc.get("version") != cls.VERSION:
            raise SpecFormatError(f"{path}: not a version-{cls.VERSION} {cls.FORMAT} file")
        v = doc["vocab"]
        vocab = Vocabulary(tokens=tuple(v["tokens"]), separator=v["separator"],
                           eos_id=v["eos_id"], name=v.get("name", ""))
        counts = {tuple(ctx): {int(t): int(c) for t, c in table} for ctx, table in doc["counts"]}
        marginal = {int(t): int(c) for t, c in doc["marginal"]}
        return cls(vocab=vocab, order=int(doc["order"]), alpha=float(doc["alpha"]),
                   counts=counts, marginal=marginal)


def train_ngram(corpus: Iterable[Text], order: int, alpha: float,
                vocab: Optional[Vocabulary] = None) -> NGramModel:
    """Count all order-grams in ``corpus`` and return a smoothed model.

    The vocabulary defaults to the one owned by the first corpus text.
    Texts shorter than the order still contribute to the backoff marginal.
    """
    texts = list(corpus)
    if not texts:
        raise TrainingInputError("training corpus is empty")
    if order < 1:
        raise TrainingInputError(f"order must be >= 1, got {order}")
    if not (alpha > 0):
        raise TrainingInputError(f"smoothing alpha must be positive, got {alpha}")
    if vocab is None:
        vocab = texts[0].vocab
    counts: dict[tuple[TokenId, ...], dict[TokenId, int]] = {}
    marginal: dict[TokenId, int] = {}
    for text in texts:
        ids = text.ids
        for tid in ids:
            marginal[tid] = marginal.get(tid, 0) + 1
        for i in range(order - 1, len(ids)):
            ctx = ids[i - order + 1:i]
            table = counts.setdefault(ctx, {})
            table[ids[i]] = table.get(ids[i], 0) + 1
    return NGramModel(vocab=vocab, order=order, alpha=alpha, counts=counts, marginal=marginal)
