"""Seedable xoshiro256** generator usable from both Python and numba kernels.

The generator state is a plain ``uint64[4]`` array so compiled kernels can
advance it in place and a run can be paused and resumed at probe ticks
without losing its position in the stream.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numba import njit

ALGORITHM_ID = "xoshiro256**"

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> tuple[int, int]:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def seed_state(seed: int) -> np.ndarray:
    """Expand a 64-bit seed into a xoshiro256** state via SplitMix64."""
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    words = []
    x = seed
    for _ in range(4):
        x, z = _splitmix64(x)
        words.append(z)
    return np.array(words, dtype=np.uint64)


def derive_seed(master_seed: int, row: int) -> int:
    """Stable per-row seed, independent of execution order or worker count."""
    digest = hashlib.blake2b(f"{master_seed}:{row}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@njit(cache=True, nogil=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True, nogil=True)
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True, nogil=True)
def below(s, n):
    """Unbiased integer in [0, n) by rejection of the short top range."""
    un = np.uint64(n)
    threshold = (np.uint64(0) - un) % un
    r = next_u64(s)
    while r < threshold:
        r = next_u64(s)
    return np.int64(r % un)


class Rng:
    """Python handle on a xoshiro256** stream.

    >>> r = Rng(7)
    >>> 0 <= r.below(10) < 10
    True
    """

    algorithm_id = ALGORITHM_ID

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.state = seed_state(self.seed)

    def next_u64(self) -> int:
        return int(next_u64(self.state))

    def below(self, n: int) -> int:
        if not 0 < n < 2**63:
            raise ValueError("below() needs a bound in [1, 2**63)")
        return int(below(self.state, n))

    def __repr__(self):
        return f"Rng(algorithm={self.algorithm_id!r}, seed={self.seed})"
