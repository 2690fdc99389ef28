"""Deterministic, documented random streams.

All sampling in this package derives from numpy's PCG64 generator (the
documented PCG XSL-RR 128/64 variant), keyed through splitmix64 so that the
mapping from integer keys to streams is portable and order-independent.

Per-class few-shot draws are seeded as ``seed XOR splitmix64(class_index)``,
so a class's sample does not depend on how many classes precede it.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mixing function (Steele et al.)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def class_rng(seed: int, class_index: int) -> np.random.Generator:
    """Generator for per-class draws, independent of class ordering."""
    return np.random.Generator(np.random.PCG64((seed & _MASK64) ^ splitmix64(class_index)))


def derived_rng(*keys: int) -> np.random.Generator:
    """Generator keyed by an ordered tuple of integers, e.g. (seed, epoch)."""
    state = 0
    for i, k in enumerate(keys):
        state ^= splitmix64((k & _MASK64) + 0x1000 * (i + 1))
    return np.random.Generator(np.random.PCG64(state))
