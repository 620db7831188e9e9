"""SplitMix64 finalizer and a counter-based uniform generator built on it.

Everything here works on Python ints or numpy ``uint64`` arrays, so scalar
and vectorized callers produce bit-identical values.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB

_GOLDEN = np.uint64(GOLDEN)
_MUL1 = np.uint64(MUL1)
_MUL2 = np.uint64(MUL2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


def mix64(z: int) -> int:
    """Scalar SplitMix64 finalizer (increment included), mod 2**64."""
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mix64`; input is cast to uint64, wraps like C."""
    with np.errstate(over="ignore"):
        z = np.asarray(z, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> _S30)) * _MUL1
        z = (z ^ (z >> _S27)) * _MUL2
        return z ^ (z >> _S31)


def stream_key(seed: int, stream: int) -> int:
    """Key of an independent stream, e.g. one per Monte-Carlo run."""
    return mix64(mix64(seed & MASK64) ^ (stream & MASK64))


def counter_uniforms(keys, counters) -> np.ndarray:
    """Uniform(0, 1) doubles ``u(key, counter)``, broadcast over both args.

    The top 52 bits of ``mix64(key ^ counter)`` are used, shifted by half a
    step; the largest value is ``1 - 2**-53``, so neither 0 nor 1 occurs.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    bits = mix64_array(keys ^ counters) >> np.uint64(12)
    return (bits.astype(np.float64) + 0.5) * 2.0**-52


def stream_keys(seed: int, streams) -> np.ndarray:
    """Vectorized :func:`stream_key` over an array of stream indices."""
    base = np.uint64(mix64(seed & MASK64))
    return mix64_array(base ^ np.asarray(streams, dtype=np.uint64))
