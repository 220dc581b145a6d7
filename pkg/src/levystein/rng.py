"""Counter-based random streams (Philox4x32-10).

Every variate is a pure function of ``(master_seed, replicate_index, role,
position)``.  Replicates can therefore be partitioned across any number of
workers without changing a single bit of the output.

Counter layout for block ``j`` of stream ``(replicate, role)``::

    c0 = j & 0xffffffff
    c1 = j >> 32
    c2 = replicate & 0xffffffff
    c3 = (role << 24) | (replicate >> 32)

The key is the master seed split into two 32-bit words.  One Philox block
(four 32-bit words) yields two 53-bit uniforms on the open interval (0, 1),
which is exactly what one Chambers-Mallows-Stuck draw consumes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np

PHILOX_M0 = 0xD2511F53
PHILOX_M1 = 0xCD9E8D57
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
MASK32 = 0xFFFFFFFF

_TWO_M53 = 1.0 / 9007199254740992.0


class Role(enum.IntEnum):
    PATH = 0
    INNER = 1
    LIMIT = 2
    NOISE = 3


def split_seed(master_seed: int) -> tuple[int, int]:
    seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    return seed & MASK32, seed >> 32


# ---------------------------------------------------------------------------
# Reference implementation (pure numpy, vectorised over counters).  Used by the
# tests as an independent route against the compiled kernels below.
# ---------------------------------------------------------------------------

def philox4x32_numpy(counters, key):
    """Philox4x32-10 bijection.

    Parameters
    ----------
    counters : array_like of shape (..., 4)
        32-bit counter words.
    key : tuple of two ints
        32-bit key words.

    Returns
    -------
    ndarray of uint64, same shape as ``counters``, holding 32-bit outputs.
    """
    c = np.asarray(counters, dtype=np.uint64) & np.uint64(MASK32)
    c0, c1, c2, c3 = (c[..., i].copy() for i in range(4))
    k0 = np.uint64(key[0] & MASK32)
    k1 = np.uint64(key[1] & MASK32)
    m0, m1 = np.uint64(PHILOX_M0), np.uint64(PHILOX_M1)
    mask = np.uint64(MASK32)
    for _ in range(10):
        p0 = c0 * m0
        p1 = c2 * m1
        c0, c1, c2, c3 = (
            ((p1 >> np.uint64(32)) ^ c1 ^ k0) & mask,
            p1 & mask,
            ((p0 >> np.uint64(32)) ^ c3 ^ k1) & mask,
            p0 & mask,
        )
        k0 = (k0 + np.uint64(PHILOX_W0)) & mask
        k1 = (k1 + np.uint64(PHILOX_W1)) & mask
    return np.stack([c0, c1, c2, c3], axis=-1)


def stream_counters(replicate: int, role: int, positions) -> np.ndarray:
    j = np.asarray(positions, dtype=np.uint64)
    out = np.empty(j.shape + (4,), dtype=np.uint64)
    out[..., 0] = j & np.uint64(MASK32)
    out[..., 1] = j >> np.uint64(32)
    out[..., 2] = np.uint64(replicate & MASK32)
    out[..., 3] = np.uint64(((role & 0xFF) << 24) | ((replicate >> 32) & 0xFFFFFF))
    return out


def uniform_pairs_numpy(master_seed: int, replicate: int, role: int, start: int, count: int):
    """Two open-interval uniforms per position, reference route."""
    words = philox4x32_numpy(
        stream_counters(replicate, role, np.arange(start, start + count, dtype=np.uint64)),
        split_seed(master_seed),
    )
    u1 = ((words[:, 0] >> np.uint64(5)) * np.uint64(67108864) + (words[:, 1] >> np.uint64(6)))
    u2 = ((words[:, 2] >> np.uint64(5)) * np.uint64(67108864) + (words[:, 3] >> np.uint64(6)))
    return (u1.astype(np.float64) + 0.5) * _TWO_M53, (u2.astype(np.float64) + 0.5) * _TWO_M53


# ---------------------------------------------------------------------------
# Compiled kernels
# ---------------------------------------------------------------------------

@numba.njit(cache=True, inline="always")
def _philox_block(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = c0 * np.uint64(PHILOX_M0)
        p1 = c2 * np.uint64(PHILOX_M1)
        n0 = ((p1 >> np.uint64(32)) ^ c1 ^ k0) & np.uint64(MASK32)
        n1 = p1 & np.uint64(MASK32)
        n2 = ((p0 >> np.uint64(32)) ^ c3 ^ k1) & np.uint64(MASK32)
        n3 = p0 & np.uint64(MASK32)
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + np.uint64(PHILOX_W0)) & np.uint64(MASK32)
        k1 = (k1 + np.uint64(PHILOX_W1)) & np.uint64(MASK32)
    return c0, c1, c2, c3


@numba.njit(cache=True, inline="always")
def _uniforms_at(k0, k1, c2, c3, j):
    c0 = np.uint64(j) & np.uint64(MASK32)
    c1 = np.uint64(j) >> np.uint64(32)
    x0, x1, x2, x3 = _philox_block(c0, c1, c2, c3, k0, k1)
    u1 = (x0 >> np.uint64(5)) * np.uint64(67108864) + (x1 >> np.uint64(6))
    u2 = (x2 >> np.uint64(5)) * np.uint64(67108864) + (x3 >> np.uint64(6))
    return (np.float64(u1) + 0.5) * _TWO_M53, (np.float64(u2) + 0.5) * _TWO_M53


@numba.njit(cache=True, inline="always")
def _cms(alpha, u1, u2):
    # symmetric Chambers-Mallows-Stuck, cf exp(-|u|^alpha)
    v = math.pi * (u1 - 0.5)
    w = -math.log(u2)
    if alpha == 2.0:
        return 2.0 * math.sqrt(w) * math.sin(v)
    if alpha == 1.0:
        return math.tan(v)
    cv = math.cos(v)
    return (math.sin(alpha * v) / cv ** (1.0 / alpha)) * (
        math.cos((1.0 - alpha) * v) / w
    ) ** ((1.0 - alpha) / alpha)


@numba.njit(cache=True)
def _fill_uniforms(k0, k1, c2, c3, start, out1, out2):
    for i in range(out1.shape[0]):
        out1[i], out2[i] = _uniforms_at(k0, k1, c2, c3, start + i)


@numba.njit(cache=True)
def _fill_stable(k0, k1, c2, c3, start, alpha, out):
    for i in range(out.shape[0]):
        u1, u2 = _uniforms_at(k0, k1, c2, c3, start + i)
        out[i] = _cms(alpha, u1, u2)


@numba.njit(cache=True)
def _fill_stable_rows(k0, k1, replicates, role, alpha, out):
    """Row r of ``out`` gets positions 0..ncol-1 of stream (replicates[r], role)."""
    ncol = out.shape[1]
    for r in range(out.shape[0]):
        rep = np.uint64(replicates[r])
        c2 = rep & np.uint64(MASK32)
        c3 = (np.uint64(role) << np.uint64(24)) | ((rep >> np.uint64(32)) & np.uint64(0xFFFFFF))
        for i in range(ncol):
            u1, u2 = _uniforms_at(k0, k1, c2, c3, i)
            out[r, i] = _cms(alpha, u1, u2)


def cms_numpy(alpha: float, u1, u2):
    """Vectorised symmetric Chambers-Mallows-Stuck transform (reference route)."""
    v = np.pi * (np.asarray(u1) - 0.5)
    w = -np.log(u2)
    if alpha == 2.0:
        return 2.0 * np.sqrt(w) * np.sin(v)
    if alpha == 1.0:
        return np.tan(v)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)) * (
        np.cos((1.0 - alpha) * v) / w
    ) ** ((1.0 - alpha) / alpha)


def _stream_words(replicate: int, role: int) -> tuple[np.uint64, np.uint64]:
    c2 = np.uint64(replicate & MASK32)
    c3 = np.uint64(((int(role) & 0xFF) << 24) | ((replicate >> 32) & 0xFFFFFF))
    return c2, c3


@dataclass
class RngStream:
    """One independent stream, addressed by ``(master_seed, replicate_index, role)``.

    The stream keeps a read position so successive calls continue the
    sequence; :meth:`reset` rewinds it.  Two streams with equal addresses
    produce identical draws regardless of process or thread.
    """

    master_seed: int
    replicate_index: int = 0
    role: Role = Role.PATH
    position: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.replicate_index < 0 or self.replicate_index >= 1 << 56:
            raise ValueError("replicate_index must lie in [0, 2**56)")
        self.role = Role(self.role)

    def reset(self) -> "RngStream":
        self.position = 0
        return self

    def _take(self, count: int) -> int:
        start = self.position
        self.position += count
        return start

    def uniform_pairs(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        k0, k1 = split_seed(self.master_seed)
        c2, c3 = _stream_words(self.replicate_index, self.role)
        out1 = np.empty(count)
        out2 = np.empty(count)
        _fill_uniforms(np.uint64(k0), np.uint64(k1), c2, c3, self._take(count), out1, out2)
        return out1, out2

    def stable(self, alpha: float, count: int) -> np.ndarray:
        """``count`` standard symmetric stable draws, cf ``exp(-|u|**alpha)``."""
        k0, k1 = split_seed(self.master_seed)
        c2, c3 = _stream_words(self.replicate_index, self.role)
        out = np.empty(count)
        _fill_stable(np.uint64(k0), np.uint64(k1), c2, c3, self._take(count), float(alpha), out)
        return out

    def standard_normal(self, count: int) -> np.ndarray:
        return self.stable(2.0, count) / math.sqrt(2.0)


def stable_rows(master_seed: int, replicates, role: Role, alpha: float, ncol: int) -> np.ndarray:
    """Matrix of standard stable draws, one stream per row.

    Row ``r`` equals ``RngStream(master_seed, replicates[r], role).stable(alpha, ncol)``.
    """
    reps = np.ascontiguousarray(replicates, dtype=np.int64)
    k0, k1 = split_seed(master_seed)
    out = np.empty((reps.shape[0], ncol))
    _fill_stable_rows(np.uint64(k0), np.uint64(k1), reps, int(role), float(alpha), out)
    return out


def normal_rows(master_seed: int, replicates, role: Role, ncol: int) -> np.ndarray:
    return stable_rows(master_seed, replicates, role, 2.0, ncol) / math.sqrt(2.0)
