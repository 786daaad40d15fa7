"""Keyed, splittable random streams.

Each stream is identified by ``(master_seed, replica, purpose)``. The key is
hashed with :class:`numpy.random.SeedSequence`; the dynamics stream then
runs SplitMix64 on that key, which both KMC backends implement bit for bit.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "PURPOSE_INIT",
    "PURPOSE_DYNAMICS",
    "PURPOSE_WSPEC",
    "stream_key",
    "numpy_generator",
    "splitmix64",
    "uniform53",
]

PURPOSE_INIT = 1
PURPOSE_DYNAMICS = 2
PURPOSE_WSPEC = 3

MASK64 = 0xFFFF_FFFF_FFFF_FFFF
GOLDEN_GAMMA = 0x9E37_79B9_7F4A_7C15


def _entropy(master_seed: int, replica: int, purpose: int) -> list[int]:
    if master_seed < 0 or replica < 0 or purpose < 0:
        raise ValueError("seed, replica index and purpose must be non-negative")
    return [int(master_seed) & MASK64, int(master_seed) >> 64, int(replica), int(purpose)]


def stream_key(master_seed: int, replica: int, purpose: int) -> int:
    """64-bit key for one stream."""
    ss = np.random.SeedSequence(_entropy(master_seed, replica, purpose))
    return int(ss.generate_state(1, np.uint64)[0])


def numpy_generator(master_seed: int, replica: int, purpose: int) -> np.random.Generator:
    """Philox generator for vectorized draws (initial configurations, W sampling)."""
    ss = np.random.SeedSequence(_entropy(master_seed, replica, purpose))
    return np.random.Generator(np.random.Philox(ss))


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB) & MASK64
    return state, z ^ (z >> 31)


def uniform53(out: int) -> float:
    """Map a 64-bit word to ``[0, 1)`` using its top 53 bits."""
    return (out >> 11) * (1.0 / 9007199254740992.0)
