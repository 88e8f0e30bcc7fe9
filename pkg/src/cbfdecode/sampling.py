"""Seeded random streams and inverse-CDF drawing.

One master seed governs a whole generation run; every consumer of
randomness gets its own derived stream so that adding or removing an
unrelated draw (tracing, diagnostics) never perturbs the others.
"""

from __future__ import annotations

import numpy as np

#: Stream ids derived from a request's master seed.
SELECTOR_STREAM = 0
MULTISTEP_STREAM = 1


def derived_rng(master_seed: int, stream: int) -> np.random.Generator:
    """Deterministic per-stream generator derived from a master seed.

    Uses ``SeedSequence(master_seed).spawn``-style keying: the stream id is
    the spawn key, so streams are independent and reproducible across
    platforms for a fixed numpy bit generator (PCG64).
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream,))
    return np.random.default_rng(ss)


def draw_index(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw over ascending indices; returns a 0-based index.

    The cumulative sum is scanned left to right, so for a fixed ``u`` the
    outcome is deterministic and zero-probability entries can never be
    selected.  A ``u`` at or beyond the accumulated total (float shortfall)
    falls back to the last positive-probability index.
    """
    c = np.cumsum(probs)
    i = int(np.searchsorted(c, u, side="right"))
    if i >= probs.size or probs[i] == 0.0:
        positive = np.flatnonzero(probs)
        i = int(positive[-1])
    return i
