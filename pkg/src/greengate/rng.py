"""Seeded random streams.

Every stream is a Philox counter-based generator keyed by a root seed and a
path of integers (plan index, attempt, ...), so parallel workers draw
independent, reproducible sequences without sharing state.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def stream(seed: int, *path: int) -> np.random.Generator:
    entropy = [int(seed) & MASK64, *(int(p) & MASK64 for p in path)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def draw_seed(rng: np.random.Generator) -> int:
    """A 63-bit child seed drawn from ``rng``."""
    return int(rng.integers(0, 1 << 63, dtype=np.int64))
