"""Vocabulary, text, and token-distribution primitives.

Token ids are 1-based on every public surface (traces, wire protocol, CLI).
Probability vectors are numpy float64 arrays where index ``i`` holds the
probability of token id ``i + 1``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidTokenError, NumericInputError

TokenId = int

#: Tolerance on the sum of a probability vector.
SUM_TOL = 1e-9


@dataclass(frozen=True)
class Vocabulary:
    """An ordered token inventory with ids 1..N.

    ``separator`` is the string inserted between token strings when a text is
    rendered: word-level toy vocabularies use a single space, character-level
    ones the empty string, and remote vocabularies use the empty string with
    server-provided surface forms carrying their own spacing.
    """

    tokens: tuple[str, ...]
    separator: str = " "
    eos_id: Optional[TokenId] = None
    name: str = ""

    def __post_init__(self):
        if not self.tokens:
            raise InvalidTokenError("vocabulary must contain at least one token")
        if len(set(self.tokens)) != len(self.tokens):
            raise InvalidTokenError("token strings must be unique")
        if self.eos_id is not None and not (1 <= self.eos_id <= len(self.tokens)):
            raise InvalidTokenError(f"eos_id {self.eos_id} outside 1..{len(self.tokens)}")

    @property
    def size(self) -> int:
        return len(self.tokens)

    def string_of(self, token_id: TokenId) -> str:
        self.check_id(token_id)
        return self.tokens[token_id - 1]

    def id_of(self, token: str) -> TokenId:
        try:
            return self.tokens.index(token) + 1
        except ValueError:
            raise InvalidTokenError(f"unknown token string {token!r}") from None

    def check_id(self, token_id: TokenId) -> None:
        if not isinstance(token_id, (int, np.integer)) or not (1 <= token_id <= self.size):
            raise InvalidTokenError(f"token id {token_id!r} outside 1..{self.size}")

    def fingerprint(self) -> str:
        """Stable content hash identifying this vocabulary in traces."""
        blob = "\x1f".join(self.tokens) + f"\x1e{self.separator}\x1e{self.eos_id}"
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]

    def tokenize(self, text: str) -> tuple[TokenId, ...]:
        """Map a surface string back to token ids.

        With a non-empty separator the string is split on it; with an empty
        separator tokens are matched greedily longest-first from the left.
        """
        if text == "":
            return ()
        if self.separator:
            return tuple(self.id_of(part) for part in text.split(self.separator))
        by_len = sorted(range(1, self.size + 1), key=lambda i: -len(self.tokens[i - 1]))
        ids: list[TokenId] = []
        pos = 0
        while pos < len(text):
            for tid in by_len:
                tok = self.tokens[tid - 1]
                if tok and text.startswith(tok, pos):
                    ids.append(tid)
                    pos += len(tok)
                    break
            else:
                raise InvalidTokenError(f"cannot tokenize {text[pos:pos + 20]!r} at offset {pos}")
        return tuple(ids)

    def text(self, ids: Iterable[TokenId] = ()) -> "Text":
        return Text.from_ids(self, ids)

    def text_from_string(self, s: str) -> "Text":
        return Text.from_ids(self, self.tokenize(s))


@dataclass(frozen=True)
class Text:
    """An immutable token sequence with its rendered surface string.

    ``rendered`` always equals the separator-joined token strings of ``ids``;
    construction goes through :meth:`from_ids` to keep that in sync.
    """

    ids: tuple[TokenId, ...]
    rendered: str
    vocab: Vocabulary = field(repr=False)

    @classmethod
    def from_ids(cls, vocab: Vocabulary, ids: Iterable[TokenId]) -> "Text":
        ids = tuple(int(i) for i in ids)
        for i in ids:
            vocab.check_id(i)
        rendered = vocab.separator.join(vocab.tokens[i - 1] for i in ids)
        return cls(ids=ids, rendered=rendered, vocab=vocab)

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Text):
            return NotImplemented
        return self.ids == other.ids and self.vocab.fingerprint() == other.vocab.fingerprint()

    def __hash__(self) -> int:
        return hash(self.ids)


def concat(x: Text, t: TokenId) -> Text:
    """Append token ``t`` to ``x``, returning a new text.

    ``x`` is never mutated; concatenation is associative and length-additive.
    """
    x.vocab.check_id(t)
    t = int(t)
    tok = x.vocab.tokens[t - 1]
    rendered = x.rendered + tok if not x.ids else x.rendered + x.vocab.separator + tok
    return Text(ids=x.ids + (t,), rendered=rendered, vocab=x.vocab)


@dataclass(frozen=True)
class TokenDistribution:
    """A probability vector over a vocabulary of N tokens.

    Entries lie in [0, 1] and sum to 1 within ``SUM_TOL``.  A fresh predictor
    output is strictly positive everywhere; filtered or remotely truncated
    distributions may contain exact zeros.
    """

    probs: np.ndarray
    support_hint: Optional[int] = None

    @classmethod
    def validated(cls, probs: Sequence[float] | np.ndarray,
                  support_hint: Optional[int] = None) -> "TokenDistribution":
        arr = np.asarray(probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise NumericInputError("probability vector must be 1-D and non-empty")
        if not np.all(np.isfinite(arr)):
            raise NumericInputError("probability vector contains non-finite entries")
        if np.any(arr < 0.0) or np.any(arr > 1.0 + SUM_TOL):
            raise NumericInputError("probability entries must lie in [0, 1]")
        total = float(arr.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise NumericInputError(f"probabilities sum to {total}, expected 1 within {SUM_TOL}")
        arr = arr.copy()
        arr.flags.writeable = False
        return cls(probs=arr, support_hint=support_hint)

    @property
    def size(self) -> int:
        return int(self.probs.size)

    def prob(self, token_id: TokenId) -> float:
        return float(self.probs[token_id - 1])

    def argsort_desc(self) -> np.ndarray:
        """Token ids in descending probability order, ties by ascending id."""
        order = np.lexsort((np.arange(self.size), -self.probs))
        return order + 1


@dataclass(frozen=True)
class PredictorConfig:
    """Temperature and paging settings for a token predictor."""

    temperature: float = 1.0
    top_m: int = 64

    def __post_init__(self):
        if not (self.temperature > 0):
            raise NumericInputError(f"temperature must be positive, got {self.temperature}")
        if self.top_m < 1:
            raise NumericInputError(f"top_m must be >= 1, got {self.top_m}")


def softmax_with_temperature(logits: Sequence[float] | np.ndarray,
                             cfg: PredictorConfig) -> TokenDistribution:
    """Temperature softmax with max-subtraction for overflow safety.

    Mathematically every output entry is strictly positive; in float64 an
    entry underflows to exact zero once ``(max - logit) / T`` exceeds about
    745 nats.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise NumericInputError("logits must be a 1-D non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise NumericInputError("logits contain non-finite entries")
    z = arr / cfg.temperature
    z = z - z.max()
    e = np.exp(z)
    probs = e / e.sum()
    probs.flags.writeable = False
    return TokenDistribution(probs=probs, support_hint=int(np.count_nonzero(probs)))


def kl_divergence(q: TokenDistribution, p: TokenDistribution) -> float:
    """KL divergence sum(q * ln(q / p)) over the support of q.

    Terms with q[t] = 0 contribute nothing.  If q places mass where p has
    none the divergence is infinite; ``math.inf`` is returned rather than
    raising, so callers can treat it as an ordinary comparison value.
    """
    if q.size != p.size:
        raise NumericInputError(f"size mismatch: {q.size} vs {p.size}")
    mask = q.probs > 0.0
    if np.any(p.probs[mask] == 0.0):
        return math.inf
    qm = q.probs[mask]
    return float(np.sum(qm * np.log(qm / p.probs[mask])))
