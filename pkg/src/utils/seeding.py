"""
Reproducible random substreams.
"""

import numpy as np

_MASK = (1 << 64) - 1


def mix64(value: int) -> int:
    """SplitMix64 finalizer."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def substream_seed(base_seed: int, index: int) -> int:
    """Combine a base seed with a realization index into an independent 64-bit seed."""
    return mix64((mix64(base_seed & _MASK) ^ (index & _MASK)) & _MASK)


def substream(base_seed: int, index: int) -> np.random.Generator:
    """Random generator for realization ``index`` of a run seeded with ``base_seed``."""
    return np.random.default_rng(substream_seed(base_seed, index))
