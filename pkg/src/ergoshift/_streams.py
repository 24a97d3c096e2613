"""Counter-based random streams.

Every random quantity in the package is a pure function of a seed and a tuple
of integer keys (stream tag, coordinate index, component, ...).  Values are
produced by chaining the SplitMix64 finalizer over the keys, so any index can
be re-materialized in O(1) without replaying earlier draws, negative indices
included, and the whole thing vectorizes over numpy arrays of keys.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)

# stream tags, kept distinct so unrelated consumers never share draws
COORDINATE = 1
CLASSICAL = 2
PIECE_END = 3
PIECE_LEVEL = 4
PIECE_TAIL = 5
REPLICATION = 6


def _as_u64(x) -> np.ndarray:
    if isinstance(x, int):
        x = x & 0xFFFFFFFFFFFFFFFF
    a = np.asarray(x)
    if a.dtype == np.uint64:
        return a
    if a.dtype.kind == "u":
        return a.astype(np.uint64)
    return a.astype(np.int64).astype(np.uint64)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def hash_keys(seed, *keys) -> np.ndarray:
    """64-bit hash of ``(seed, *keys)``; broadcasts over array-valued keys."""
    with np.errstate(over="ignore"):
        h = _mix(_as_u64(seed) + _GAMMA)
        for i, k in enumerate(keys):
            h = _mix(h ^ _mix(_as_u64(k) + _GAMMA * np.uint64(i + 2)))
    return np.asarray(h)


def uniforms(seed, *keys) -> np.ndarray:
    """Uniform variates on the open interval (0, 1)."""
    bits = hash_keys(seed, *keys) >> _S11
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def normals(seed, *keys) -> np.ndarray:
    """Standard Gaussian variates by inverse-CDF transform of :func:`uniforms`."""
    return ndtri(uniforms(seed, *keys))


def bits(seed, *keys) -> np.ndarray:
    """Fair binary digits in {0, 1}, as floats."""
    return (hash_keys(seed, *keys) >> np.uint64(63)).astype(np.float64)


def spawn_seeds(seed: int, count: int) -> np.ndarray:
    """Independent child seeds for replications."""
    return np.random.SeedSequence(int(seed)).generate_state(count, np.uint64)
