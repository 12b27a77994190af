"""Seed policy and the one PRNG used everywhere.

All randomness goes through ``numpy.random.Generator(PCG64(seed))``. PCG64 is
specified bit-for-bit by numpy, so fixed seeds give identical streams on every
platform. Trial ``i`` of a run with base seed ``s`` uses
``(s + i * 0x9E3779B97F4A7C15) mod 2**64``.
"""
from __future__ import annotations

import numpy as np

SEED_STRIDE = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def make_rng(seed) -> np.random.Generator:
    """Generator for ``seed``; an existing Generator is passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))


def trial_seed(base_seed: int, i: int) -> int:
    return (int(base_seed) + int(i) * SEED_STRIDE) & _MASK64


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 64-bit seed for an independent sub-stream."""
    return int(rng.integers(0, 2**63, dtype=np.int64))
