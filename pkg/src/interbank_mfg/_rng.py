"""Counter-based Gaussian noise: Philox4x64-10 keyed by (seed, stream, path, step).

A draw is a pure function of its coordinates, so any subset of paths,
streams or time steps can be regenerated independently and in any order.
Philox output is bit-compatible with ``numpy.random.Philox``; normals come
from Box-Muller on pairs of 53-bit uniforms (4 normals per Philox block).
"""

from __future__ import annotations

import math

import numba
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


@numba.njit(cache=True, inline="always")
def _mulhilo(a, b):
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _LO32) + (p2 & _LO32)
    hi = p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    return hi, a * b


@numba.njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@numba.njit(cache=True, inline="always")
def _unit(x):
    # (0, 1), never 0 so the log below is finite
    return (float(x >> _S11) + 0.5) * _INV_2_53


@numba.njit(cache=True)
def normal_block(seed, stream, path, block, out):
    """Write the 4 standard normals of one counter block into ``out[0:4]``."""
    r0, r1, r2, r3 = philox4x64(
        np.uint64(block), np.uint64(stream), np.uint64(path), np.uint64(0), np.uint64(seed), np.uint64(0)
    )
    rad = math.sqrt(-2.0 * math.log(_unit(r0)))
    ang = _TWO_PI * _unit(r1)
    out[0] = rad * math.cos(ang)
    out[1] = rad * math.sin(ang)
    rad = math.sqrt(-2.0 * math.log(_unit(r2)))
    ang = _TWO_PI * _unit(r3)
    out[2] = rad * math.cos(ang)
    out[3] = rad * math.sin(ang)


@numba.njit(cache=True)
def fill_normals(seed, path, streams, n_steps):
    """Standard normals, shape (len(streams), n_steps); entry [j, k] is keyed
    by (seed, streams[j], path, k)."""
    out = np.empty((streams.shape[0], n_steps))
    buf = np.empty(4)
    for j in range(streams.shape[0]):
        for blk in range((n_steps + 3) // 4):
            normal_block(seed, streams[j], path, blk, buf)
            for r in range(4):
                k = 4 * blk + r
                if k < n_steps:
                    out[j, k] = buf[r]
    return out


def standard_normals(seed: int, path: int, streams, n_steps: int) -> np.ndarray:
    streams = np.asarray(streams, dtype=np.uint64)
    return fill_normals(np.uint64(seed), np.uint64(path), streams, int(n_steps))
