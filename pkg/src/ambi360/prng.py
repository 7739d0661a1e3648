"""SplitMix64 stream used for every seeded weight tensor.

SplitMix64 is counter based (state_k = seed + k * golden), so a block of n
outputs is computed in one vectorized pass and matches the scalar reference
bit for bit.
"""

from __future__ import annotations

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def splitmix64_scalar(state: int) -> tuple[int, int]:
    """Reference step: returns (new_state, output)."""
    state = (state + GOLDEN_GAMMA) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * np.uint64(GOLDEN_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GOLDEN_GAMMA) & _MASK
        return z

    def uniform(self, shape, low: float = -0.05, high: float = 0.05) -> np.ndarray:
        """Doubles in [low, high) from the top 53 bits of each output."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return (low + (high - low) * u).reshape(shape)


def derive_seed(seed: int, stream: int) -> int:
    """Independent 64-bit seed for a named sub-stream of a user seed."""
    _, out = splitmix64_scalar((int(seed) ^ int(stream)) & _MASK)
    return out
