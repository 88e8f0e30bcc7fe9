"""Horizon-H block sampling under an end-of-block constraint.

Single-step filtering can paint the generator into a corner: each token
is admissible but the trajectory drifts toward a cliff.  The multi-step
scheme samples whole H-token blocks from the unconstrained predictor,
keeps the ones whose endpoint satisfies h(x + y) >= gamma * h(x), and
picks among the keepers proportionally to their sequence probability.
The best-of-k baseline skips the constraint and just takes the block with
the highest endpoint score; it carries no guarantee and exists to be
compared against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Text, TokenId, concat
from .errors import InfeasibleHorizonError, NumericInputError
from .lcf import LCF
from .predictor import TokenPredictor
from .sampling import draw_index

#: Default attempt budget per required candidate.
ATTEMPT_FACTOR = 1000


@dataclass(frozen=True)
class TokenBlock:
    """An H-token continuation with its accumulated log-probability.

    ``h_end`` is the constraint value at the block's endpoint, filled in
    once evaluated; blocks fresh out of the sampler carry ``None``.
    """

    tokens: tuple[TokenId, ...]
    logprob: float
    h_end: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.tokens:
            raise NumericInputError("a block needs at least one token")
        if not math.isfinite(self.logprob) or self.logprob > 0.0:
            raise NumericInputError(f"block logprob must be finite and <= 0, got {self.logprob}")


@dataclass(frozen=True)
class MultiStepConfig:
    """Horizon length, candidate count, decay rate, and attempt budget.

    ``max_attempts`` defaults to ``ATTEMPT_FACTOR * sample_size``.
    """

    horizon: int
    sample_size: int
    gamma: float
    max_attempts: Optional[int] = None

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise NumericInputError(f"horizon must be >= 1, got {self.horizon}")
        if self.sample_size < 1:
            raise NumericInputError(f"sample_size must be >= 1, got {self.sample_size}")
        if not (0.0 <= self.gamma <= 1.0):
            raise NumericInputError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.max_attempts is None:
            object.__setattr__(self, "max_attempts", ATTEMPT_FACTOR * self.sample_size)
        if self.max_attempts < self.sample_size:
            raise NumericInputError(
                f"max_attempts {self.max_attempts} is smaller than sample_size {self.sample_size}"
            )


@dataclass(frozen=True)
class CandidateStats:
    """Bookkeeping from one block-selection step."""

    attempts: int
    rejections: int
    candidates: tuple[TokenBlock, ...]


def extend(x: Text, tokens: tuple[TokenId, ...]) -> Text:
    """Append a whole block to a text, one token at a time."""
    for t in tokens:
        x = concat(x, t)
    return x


def block_probability(g: TokenPredictor, x: Text, y: TokenBlock) -> float:
    """Probability of ``y`` after ``x``: the product of stepwise predictions."""
    prefix = x
    prod = 1.0
    for t in y.tokens:
        prod *= g.predict(prefix).prob(t)
        prefix = concat(prefix, t)
    return prod


def sample_block(
    g: TokenPredictor, x: Text, horizon: int, rng: np.random.Generator
) -> TokenBlock:
    """Draw ``horizon`` tokens autoregressively from ``g``.

    One uniform variate is consumed per token, mapped through the
    inverse CDF over ascending token ids, so the draw sequence is fully
    determined by the generator state.
    """
    prefix = x
    tokens: list[TokenId] = []
    logprob = 0.0
    for _ in range(horizon):
        dist = g.predict(prefix)
        idx = draw_index(dist.probs, rng.random())
        tokens.append(idx + 1)
        logprob += math.log(dist.probs[idx])
        prefix = concat(prefix, idx + 1)
    return TokenBlock(tokens=tuple(tokens), logprob=logprob)


def candidate_weights(candidates: tuple[TokenBlock, ...]) -> np.ndarray:
    """Selection weights proportional to exp(logprob), max-shifted.

    Shifting by the maximum before exponentiating keeps the weights
    finite for very improbable blocks; the ratios are unchanged.
    """
    lp = np.array([c.logprob for c in candidates], dtype=np.float64)
    w = np.exp(lp - lp.max())
    return w / w.sum()


def multistep_step(
    g: TokenPredictor,
    x: Text,
    h: LCF,
    cfg: MultiStepConfig,
    rng: np.random.Generator,
) -> tuple[TokenBlock, CandidateStats]:
    """Rejection-sample candidate blocks, then pick one by weight.

    Sampling continues until ``cfg.sample_size`` blocks satisfy the
    endpoint condition or the attempt budget runs out, in which case the
    partial harvest travels with the raised error.
    """
    base = h.evaluate(x)
    accepted: list[TokenBlock] = []
    attempts = 0
    while len(accepted) < cfg.sample_size:
        if attempts >= cfg.max_attempts:
            raise InfeasibleHorizonError(
                attempts=attempts,
                required=cfg.sample_size,
                candidates=tuple(accepted),
            )
        attempts += 1
        block = sample_block(g, x, cfg.horizon, rng)
        h_end = h.evaluate(extend(x, block.tokens))
        if h_end >= cfg.gamma * base:
            accepted.append(TokenBlock(block.tokens, block.logprob, h_end=h_end))
    weights = candidate_weights(tuple(accepted))
    chosen = accepted[draw_index(weights, rng.random())]
    stats = CandidateStats(
        attempts=attempts,
        rejections=attempts - len(accepted),
        candidates=tuple(accepted),
    )
    return chosen, stats


def blockwise_best_of_k_step(
    g: TokenPredictor,
    x: Text,
    h: LCF,
    horizon: int,
    sample_size: int,
    rng: np.random.Generator,
) -> tuple[TokenBlock, CandidateStats]:
    """Unconstrained baseline: draw K blocks, keep the best endpoint.

    Ties on the endpoint score go to the higher log-probability block,
    then to the lexicographically smaller token tuple.  Every draw is
    accepted, so the stats never report rejections.
    """
    candidates: list[TokenBlock] = []
    for _ in range(sample_size):
        block = sample_block(g, x, horizon, rng)
        h_end = h.evaluate(extend(x, block.tokens))
        candidates.append(TokenBlock(block.tokens, block.logprob, h_end=h_end))
    best = candidates[0]
    for cand in candidates[1:]:
        if cand.h_end > best.h_end:
            best = cand
        elif cand.h_end == best.h_end:
            if cand.logprob > best.logprob or (
                cand.logprob == best.logprob and cand.tokens < best.tokens
            ):
                best = cand
    stats = CandidateStats(attempts=sample_size, rejections=0, candidates=tuple(candidates))
    return best, stats
