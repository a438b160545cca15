"""Seed bookkeeping.

Every randomized step draws from a ``PCG64`` stream keyed by
``(master seed, role, *keys)`` through :class:`numpy.random.SeedSequence`,
so results never depend on scheduling or thread count. Normal variates
come from ``Generator.standard_normal`` (numpy's ziggurat sampler).
"""
from __future__ import annotations

import numpy as np

FAMILY = 0
SAMPLE = 1
BOOTSTRAP = 2
RESTART = 3
ENORM = 4
TENSOR = 5

CHUNK = 4096
SEED_MASK = (1 << 64) - 1


def substream(seed: int, role: int, *keys: int) -> np.random.Generator:
    entropy = [int(seed) & SEED_MASK, int(role), *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def chunk_bounds(n: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def derive_seed(seed: int, role: int, *keys: int) -> int:
    """A 63-bit integer seed for a child experiment."""
    entropy = [int(seed) & SEED_MASK, int(role), *(int(k) for k in keys)]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0] >> 1)
