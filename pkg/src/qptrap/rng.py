"""Counter-based random streams.

Every Monte Carlo packet owns a 64-bit stream key derived from
``(seed, packet_index)``; the n-th draw of a stream is a pure function of
``(key, n)``. Results therefore do not depend on how packets are scheduled
across workers.

The generator is SplitMix64 used in counter mode: the output for counter
``n`` is the SplitMix64 finalizer applied to ``key + n * golden``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_KEY_SALT = np.uint64(0x5851F42D4C957F2D)
_INV53 = 1.0 / 9007199254740992.0
_MASK64 = (1 << 64) - 1


@njit(cache=True, nogil=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True, inline="always")
def uniform_at(key, counter):
    """Uniform double in [0, 1) for draw ``counter`` of stream ``key``."""
    z = mix64(key + np.uint64(counter) * _GOLDEN)
    return float(z >> _S11) * _INV53


@njit(cache=True, nogil=True)
def stream_key_nb(seed, index):
    return mix64(np.uint64(seed) ^ mix64(np.uint64(index) * _KEY_SALT + _GOLDEN))


def _mix64_py(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, index: int) -> int:
    """64-bit key of packet ``index`` under ``seed`` (pure Python reference)."""
    seed &= _MASK64
    inner = (index * 0x5851F42D4C957F2D + 0x9E3779B97F4A7C15) & _MASK64
    return _mix64_py(seed ^ _mix64_py(inner))


def uniforms(key: int, start: int, n: int) -> np.ndarray:
    """``n`` consecutive draws of stream ``key`` starting at counter ``start``.

    Integer arithmetic runs on Python ints, so this is an independent
    reference for the compiled generator.
    """
    out = np.empty(n)
    for i in range(n):
        z = (key + (start + i) * 0x9E3779B97F4A7C15) & _MASK64
        out[i] = (_mix64_py(z) >> 11) * _INV53
    return out


@dataclass
class PacketStream:
    """Position within one packet's random stream."""

    key: int
    counter: int = 0

    @classmethod
    def for_packet(cls, seed: int, index: int) -> "PacketStream":
        return cls(stream_key(seed, index), 0)
