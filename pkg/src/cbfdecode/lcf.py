"""Constraint functions over texts.

An LCF maps a text to a real number whose sign decides set membership: a
value >= 0 marks the text as desirable, a value < 0 as undesirable.  That
sign convention is the definition of membership used by the whole filter
stack; the magnitude is treated as ordinal only and never compared across
different LCF instances.

A classifier trained on complete sentences may be unreliable on mid-text
prefixes; evaluators here score whatever prefix they are given and leave
that caveat to the caller.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal, Optional, Union

from .core import Text
from .errors import InvalidScoresError, SpecFormatError

SCORE_SUM_TOL = 1e-6


class LCF(ABC):
    """Sign-encoded desirability evaluator.

    ``evaluate`` must be deterministic per text. ``range_hint`` optionally
    bounds the attainable values.
    """

    name: str = "lcf"
    range_hint: Optional[tuple[float, float]] = None

    @abstractmethod
    def evaluate(self, x: Text) -> float:
        ...

    def __call__(self, x: Text) -> float:
        return self.evaluate(x)


class ConstantLCF(LCF):
    """Returns the same value for every text; useful as a degenerate case."""

    def __init__(self, value: float, name: str = "constant"):
        self.value = float(value)
        self.name = name
        self.range_hint = (self.value, self.value)

    def evaluate(self, x: Text) -> float:
        return self.value


class LexiconLCF(LCF):
    """Damped average of per-token valence weights.

    Sums the valences of the tokens in the window (the last ``window``
    tokens, or all of them) and divides by ``max(normalizer, count)``, where
    ``count`` is the number of tokens in the window.  The damping keeps
    ``|h| <= max|weight|`` for every text and makes short prefixes score
    close to zero.  Tokens absent from the lexicon carry weight 0.
    """

    def __init__(self, valence: dict[str, float],
                 window: Union[int, Literal["all"]] = "all",
                 normalizer: float = 1.0,
                 name: str = "lexicon"):
        if window != "all" and (not isinstance(window, int) or window < 1):
            raise SpecFormatError(f"window must be 'all' or a positive int, got {window!r}")
        if not (normalizer > 0):
            raise SpecFormatError(f"normalizer must be positive, got {normalizer}")
        self.valence = dict(valence)
        self.window = window
        self.normalizer = float(normalizer)
        self.name = name
        peak = max((abs(w) for w in self.valence.values()), default=0.0)
        self.range_hint = (-peak, peak)

    def evaluate(self, x: Text) -> float:
        toks = [x.vocab.tokens[i - 1] for i in x.ids]
        if self.window != "all":
            toks = toks[-self.window:]
        total = sum(self.valence.get(t, 0.0) for t in toks)
        return total / max(self.normalizer, float(len(toks)))


@dataclass(frozen=True)
class ClassScores:
    """Softmax output of a 3-class (negative/neutral/positive) classifier."""

    s_neg: float
    s_neu: float
    s_pos: float

    def __post_init__(self):
        for v in (self.s_neg, self.s_neu, self.s_pos):
            if not (0.0 <= v <= 1.0):
                raise InvalidScoresError(f"score {v} outside [0, 1]")
        total = self.s_neg + self.s_neu + self.s_pos
        if abs(total - 1.0) > SCORE_SUM_TOL:
            raise InvalidScoresError(f"scores sum to {total}, expected 1 within {SCORE_SUM_TOL}")


def from_class_scores(s: ClassScores) -> float:
    """Positive score minus the larger of the negative and neutral scores.

    Positive exactly when the positive class dominates both others; a tie
    yields 0, which counts as desirable.  The result lies in [-1, 1].
    """
    return s.s_pos - max(s.s_neg, s.s_neu)


class ScoreLCF(LCF):
    """Constraint function composed from a 3-class score source."""

    def __init__(self, score_fn: Callable[[Text], ClassScores], name: str = "classifier"):
        self._score_fn = score_fn
        self.name = name
        self.range_hint = (-1.0, 1.0)

    def evaluate(self, x: Text) -> float:
        return from_class_scores(self._score_fn(x))


class CachedLCF(LCF):
    """Memoizes an inner LCF per token-id sequence.

    The scanning filter re-evaluates the current text for every candidate
    token; caching makes that base evaluation O(1) after the first call.
    Safe for concurrent reads; writes rely on the dict being updated
    atomically per key.
    """

    def __init__(self, inner: LCF):
        self.inner = inner
        self.name = inner.name
        self.range_hint = inner.range_hint
        self._cache: dict[tuple[int, ...], float] = {}

    def evaluate(self, x: Text) -> float:
        key = x.ids
        hit = self._cache.get(key)
        if hit is None and key not in self._cache:
            hit = self.inner.evaluate(x)
            self._cache[key] = hit
        return hit  # type: ignore[return-value]


def load_lexicon(path: str | Path) -> dict[str, float]:
    """Parse a lexicon file: one ``token<TAB>weight`` per line, UTF-8."""
    out: dict[str, float] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise SpecFormatError(f"cannot read lexicon {path}: {exc}") from exc
    for no, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise SpecFormatError(f"{path}:{no}: expected 'token<TAB>weight', got {line!r}")
        token, weight = parts
        try:
            out[token] = float(weight)
        except ValueError:
            raise SpecFormatError(f"{path}:{no}: bad weight {weight!r}") from None
    return out
