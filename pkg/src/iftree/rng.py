"""Keyed random-number streams.

Every source of randomness in the package is a Philox (counter-based,
64-bit) generator whose 128-bit key is derived from a user seed plus a
tuple of integer tags.  Streams are therefore independent of execution
order and of worker identity: the same (seed, tags) always yields the
same draws, on any platform and with any degree of parallelism.
"""

from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1

# domain tags keeping unrelated streams apart
IRT = 1
COVARIATES = 2
PERMUTATION = 3
GENERIC = 4


def _mix64(z: int) -> int:
    """splitmix64 finalizer; bijective on 64-bit ints."""
    z = (z + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def stream_key(seed: int, *tags: int) -> tuple[int, int]:
    """Derive a 128-bit Philox key from a seed and integer tags."""
    k = _mix64(seed & _M64)
    for t in tags:
        k = _mix64(k ^ _mix64(t & _M64))
    return k, _mix64(k ^ 0xD1B54A32D192ED03)


def stream(seed: int, *tags: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, *tags)."""
    k0, k1 = stream_key(seed, *tags)
    return np.random.Generator(np.random.Philox(key=np.array([k0, k1], dtype=np.uint64)))


def derive_seed(seed: int, *tags: int) -> int:
    """A daughter seed usable wherever a plain integer seed is expected."""
    return stream_key(seed, *tags)[0] & ((1 << 63) - 1)
