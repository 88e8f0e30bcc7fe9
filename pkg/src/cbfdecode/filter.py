"""Constraint filtering of next-token distributions.

A candidate token t is admissible after prefix x when

    h(x + t) >= gamma * h(x)

with exact float comparison: no epsilon is added on either side, since a
tolerance would admit tokens that strictly violate the decay condition.

``zero_and_renormalize`` is the projection at the core of the strict
filter: zero out inadmissible entries and rescale the rest.  Among all
distributions supported on the admissible set it is the closest to the
original in KL divergence.  ``relaxed_projection`` is the soft variant
that caps inadmissible mass at delta instead of removing it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .core import Text, TokenDistribution, TokenId, concat
from .errors import InfeasibleConstraintError, NumericInputError
from .lcf import LCF
from .predictor import TokenPredictor

#: Default scan budget per admitted token for the ranked scan.
SCAN_CAP_FACTOR = 200


@dataclass(frozen=True)
class FilterConfig:
    """Knobs for the constraint filter.

    ``scan_cap`` bounds how many ranked candidates the top-k scan may
    inspect; it defaults to ``SCAN_CAP_FACTOR * top_k``.
    """

    gamma: float
    delta: float = 0.0
    top_k: int = 30
    scan_cap: Optional[int] = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.gamma <= 1.0):
            raise NumericInputError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not (0.0 <= self.delta < 1.0):
            raise NumericInputError(f"delta must lie in [0, 1), got {self.delta}")
        if self.top_k < 1:
            raise NumericInputError(f"top_k must be >= 1, got {self.top_k}")
        if self.scan_cap is None:
            object.__setattr__(self, "scan_cap", SCAN_CAP_FACTOR * self.top_k)
        if self.scan_cap < self.top_k:
            raise NumericInputError(
                f"scan_cap {self.scan_cap} is smaller than top_k {self.top_k}"
            )


@dataclass(frozen=True)
class FilterResult:
    """Outcome of one filtering step.

    ``scans`` counts every candidate whose admissibility was checked, so
    ``disallowed_count + len(allowed) == scans`` always holds.
    ``truncated`` marks a ranked scan that hit its cap before collecting
    ``top_k`` admissible tokens (but found at least one).
    """

    q: TokenDistribution
    allowed: frozenset[TokenId]
    disallowed_count: int
    scans: int
    base_h: float
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.disallowed_count + len(self.allowed) != self.scans:
            raise NumericInputError(
                "inconsistent filter bookkeeping: "
                f"{self.disallowed_count} disallowed + {len(self.allowed)} allowed "
                f"!= {self.scans} scans"
            )


def is_allowed(h: LCF, x: Text, t: TokenId, gamma: float) -> tuple[bool, float]:
    """Check the decay condition for one candidate; returns (ok, h(x + t))."""
    base = h.evaluate(x)
    h_next = h.evaluate(concat(x, t))
    return h_next >= gamma * base, h_next


def zero_and_renormalize(probs: np.ndarray, allowed_mask: np.ndarray) -> np.ndarray:
    """Project ``probs`` onto the admissible set by zeroing and rescaling.

    ``allowed_mask`` is a boolean array aligned with ``probs`` (index i
    corresponds to token id i + 1).  Raises when no admissible mass
    remains, since no valid projection exists then.
    """
    probs = np.asarray(probs, dtype=np.float64)
    mask = np.asarray(allowed_mask, dtype=bool)
    if probs.shape != mask.shape:
        raise NumericInputError(
            f"probs shape {probs.shape} does not match mask shape {mask.shape}"
        )
    mass = float(probs[mask].sum())
    if mass <= 0.0:
        raise NumericInputError("no probability mass on the admissible set")
    q = np.where(mask, probs, 0.0)
    q /= mass
    return q


def relaxed_projection(
    probs: np.ndarray, allowed_mask: np.ndarray, delta: float
) -> np.ndarray:
    """Cap inadmissible mass at ``delta`` instead of removing it.

    If the inadmissible group already holds at most ``delta`` mass the
    input is returned unchanged (as a copy).  Otherwise the inadmissible
    entries are scaled to total exactly ``delta`` and the admissible ones
    to ``1 - delta``, each group keeping its internal proportions.  This
    is the KL-closest distribution subject to the cap.
    """
    probs = np.asarray(probs, dtype=np.float64)
    mask = np.asarray(allowed_mask, dtype=bool)
    if probs.shape != mask.shape:
        raise NumericInputError(
            f"probs shape {probs.shape} does not match mask shape {mask.shape}"
        )
    if not (0.0 <= delta < 1.0):
        raise NumericInputError(f"delta must lie in [0, 1), got {delta}")
    bad_mass = float(probs[~mask].sum())
    if bad_mass <= delta:
        return probs.copy()
    if delta == 0.0:
        # zero budget degenerates to the hard projection; reuse it so the
        # two paths agree bit for bit
        return zero_and_renormalize(probs, mask)
    good_mass = float(probs[mask].sum())
    if good_mass <= 0.0:
        raise NumericInputError("no probability mass on the admissible set")
    q = np.empty_like(probs)
    q[~mask] = probs[~mask] * (delta / bad_mass)
    q[mask] = probs[mask] * ((1.0 - delta) / good_mass)
    return q


def _admissibility_mask(
    p: TokenDistribution, x: Text, h: LCF, gamma: float
) -> tuple[np.ndarray, float]:
    base = h.evaluate(x)
    n = p.probs.size
    mask = np.zeros(n, dtype=bool)
    for t in range(1, n + 1):
        h_next = h.evaluate(concat(x, t))
        mask[t - 1] = h_next >= gamma * base
    return mask, base


def filter_full(
    p: TokenDistribution, x: Text, h: LCF, gamma: float
) -> FilterResult:
    """Exhaustively check every token and project onto the admissible set."""
    mask, base = _admissibility_mask(p, x, h, gamma)
    n = p.probs.size
    allowed = frozenset(int(i) + 1 for i in np.flatnonzero(mask))
    if not allowed:
        raise InfeasibleConstraintError(gamma=gamma, base_h=base, scans=n)
    q = zero_and_renormalize(p.probs, mask)
    return FilterResult(
        q=TokenDistribution.validated(q, support_hint=len(allowed)),
        allowed=allowed,
        disallowed_count=n - len(allowed),
        scans=n,
        base_h=base,
    )


def _ranked_candidates(
    g: TokenPredictor, x: Text
) -> Iterator[tuple[TokenId, float]]:
    """Candidates in descending probability, ties by ascending token id."""
    if g.supports_full_distribution:
        dist = g.predict(x)
        for t in dist.argsort_desc():
            yield int(t), float(dist.prob(int(t)))
        return
    offset = 0
    m = g.page_size
    while True:
        page = g.predict_topm(x, offset=offset, m=m)
        yield from page.entries
        if len(page.entries) < m:
            return
        offset += m


def filter_topk(
    g: TokenPredictor, x: Text, h: LCF, cfg: FilterConfig
) -> FilterResult:
    """Scan ranked candidates until ``top_k`` admissible tokens are found.

    The scan stops early at ``cfg.scan_cap`` checks; a partial harvest is
    reported via ``truncated``, an empty one raises.  Only scanned tokens
    can enter the result, so the projection runs over the scanned prefix
    of the ranking.
    """
    base = h.evaluate(x)
    n = g.vocab.size
    probs_seen = np.zeros(n, dtype=np.float64)
    mask = np.zeros(n, dtype=bool)
    allowed: list[TokenId] = []
    scans = 0
    for t, prob in _ranked_candidates(g, x):
        if scans >= cfg.scan_cap or len(allowed) >= cfg.top_k:
            break
        scans += 1
        probs_seen[t - 1] = prob
        h_next = h.evaluate(concat(x, t))
        if h_next >= cfg.gamma * base:
            allowed.append(t)
            mask[t - 1] = True
    if not allowed:
        raise InfeasibleConstraintError(gamma=cfg.gamma, base_h=base, scans=scans)
    q = zero_and_renormalize(probs_seen, mask)
    return FilterResult(
        q=TokenDistribution.validated(q, support_hint=len(allowed)),
        allowed=frozenset(allowed),
        disallowed_count=scans - len(allowed),
        scans=scans,
        base_h=base,
        truncated=len(allowed) < cfg.top_k,
    )


def filter_relaxed(
    p: TokenDistribution, x: Text, h: LCF, gamma: float, delta: float
) -> FilterResult:
    """Soft filter capping inadmissible mass at ``delta``.

    ``delta == 0`` delegates to :func:`filter_full` and is bit-identical
    to it.  A nonzero ``delta`` still requires at least one admissible
    token carrying mass; the cap redistributes, it cannot conjure an
    admissible target out of nothing.
    """
    if delta == 0.0:
        return filter_full(p, x, h, gamma)
    mask, base = _admissibility_mask(p, x, h, gamma)
    n = p.probs.size
    allowed = frozenset(int(i) + 1 for i in np.flatnonzero(mask))
    if not allowed or float(p.probs[mask].sum()) <= 0.0:
        raise InfeasibleConstraintError(gamma=gamma, base_h=base, scans=n)
    q = relaxed_projection(p.probs, mask, delta)
    return FilterResult(
        q=TokenDistribution.validated(q),
        allowed=allowed,
        disallowed_count=n - len(allowed),
        scans=n,
        base_h=base,
    )
