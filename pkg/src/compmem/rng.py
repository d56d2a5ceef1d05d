"""Counter-based keyed random streams.

Every random draw in the simulator is a pure function of
``(key, stream_id, counter)`` evaluated with the Threefry-2x32 block cipher
(20 rounds).  Two draws with the same triple are identical no matter in
which order, batch, or worker they are computed, which is what makes bulk
array operations independent of scheduling.
"""

from __future__ import annotations

import hashlib

import numba as nb
import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "RandomStream",
    "derive_key",
    "threefry2x32",
    "uniforms",
    "normals",
    "truncated_normals",
]

_MASK32 = 0xFFFFFFFF
_ROT = (13, 15, 26, 6, 17, 29, 16, 24)
_PARITY = 0x1BD11BDA


@nb.njit(cache=True, inline="always")
def _rotl(x, r):
    return ((x << r) | (x >> (32 - r))) & 0xFFFFFFFF


@nb.njit(cache=True)
def _threefry_block(k0, k1, c0, c1):
    # operands are int64 holding 32-bit words; every sum is masked back
    ks0 = k0
    ks1 = k1
    ks2 = (_PARITY ^ k0 ^ k1) & 0xFFFFFFFF
    x0 = (c0 + ks0) & 0xFFFFFFFF
    x1 = (c1 + ks1) & 0xFFFFFFFF
    for group in range(5):
        for j in range(4):
            rot = _ROT[(4 * group + j) % 8]
            x0 = (x0 + x1) & 0xFFFFFFFF
            x1 = _rotl(x1, rot)
            x1 ^= x0
        inj = group + 1
        m = inj % 3
        if m == 0:
            a, b = ks0, ks1
        elif m == 1:
            a, b = ks1, ks2
        else:
            a, b = ks2, ks0
        x0 = (x0 + a) & 0xFFFFFFFF
        x1 = (x1 + b + inj) & 0xFFFFFFFF
    return x0, x1


@nb.njit(cache=True, inline="always")
def _to_unit(w0, w1):
    # 53 random bits -> open interval (0, 1)
    bits = ((w0 << 21) | (w1 >> 11)) & 0x1FFFFFFFFFFFFF
    return (bits + 0.5) * 1.1102230246251565e-16


@nb.njit(cache=True, nogil=True)
def _uniform_kernel(k0, k1, ids, counters, out):
    for n in range(ids.shape[0]):
        w0, w1 = _threefry_block(k0, k1, ids[n], counters[n])
        out[n] = _to_unit(w0, w1)


@nb.njit(cache=True, nogil=True)
def _threefry_kernel(k0, k1, c0, c1, out0, out1):
    for n in range(c0.shape[0]):
        w0, w1 = _threefry_block(k0, k1, c0[n], c1[n])
        out0[n] = w0
        out1[n] = w1


def threefry2x32(key: tuple[int, int], c0, c1) -> tuple[np.ndarray, np.ndarray]:
    """Raw Threefry-2x32-20 blocks for counter pairs ``(c0[n], c1[n])``."""
    c0 = np.atleast_1d(np.asarray(c0, dtype=np.int64))
    c1 = np.atleast_1d(np.asarray(c1, dtype=np.int64))
    c0, c1 = np.broadcast_arrays(c0, c1)
    out0 = np.empty(c0.shape[0], dtype=np.int64)
    out1 = np.empty(c0.shape[0], dtype=np.int64)
    _threefry_kernel(np.int64(key[0]), np.int64(key[1]),
                     np.ascontiguousarray(c0), np.ascontiguousarray(c1), out0, out1)
    return out0.astype(np.uint32), out1.astype(np.uint32)


def derive_key(seed: int, domain: str) -> tuple[int, int]:
    """Map a 64-bit seed and a domain label to a Threefry key.

    Distinct domains give unrelated keys for the same seed, so the process
    generator and the device array can share one user-facing seed.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    digest = hashlib.blake2b(f"{domain}:{seed}".encode(), digest_size=8).digest()
    word = int.from_bytes(digest, "little")
    return word & _MASK32, word >> 32


def uniforms(key: tuple[int, int], ids, counters) -> np.ndarray:
    """One uniform in (0, 1) per ``(ids[n], counters[n])`` pair."""
    ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
    counters = np.atleast_1d(np.asarray(counters, dtype=np.int64))
    ids, counters = np.broadcast_arrays(ids, counters)
    if ids.size and (ids.min() < 0 or ids.max() > _MASK32):
        raise ValueError("stream ids must fit in 32 bits")
    if counters.size and (counters.min() < 0 or counters.max() > _MASK32):
        raise ValueError("stream counters must fit in 32 bits")
    out = np.empty(ids.shape[0], dtype=np.float64)
    _uniform_kernel(np.int64(key[0]), np.int64(key[1]),
                    np.ascontiguousarray(ids), np.ascontiguousarray(counters), out)
    return out


def normals(key, ids, counters) -> np.ndarray:
    """Standard normal draws by inversion of :func:`uniforms`."""
    return ndtri(uniforms(key, ids, counters))


def truncated_normals(key, ids, counters, mean: float, sigma: float) -> np.ndarray:
    """Normal(mean, sigma) conditioned on being strictly positive.

    Uses inversion, so each draw consumes exactly one counter value.
    """
    u = uniforms(key, ids, counters)
    if sigma == 0:
        return np.full(u.shape, float(mean))
    lo = ndtr(-mean / sigma)
    x = mean + sigma * ndtri(lo + u * (1.0 - lo))
    # inversion can round to 0 deep in the tail
    return np.maximum(x, np.nextafter(0.0, 1.0))


class RandomStream:
    """A single keyed stream: fixed ``(key, stream_id)``, advancing counter.

    >>> s = RandomStream(seed=7, stream_id=3)
    >>> a = s.uniform(); s.counter
    1
    """

    def __init__(self, seed: int = 0, stream_id: int = 0, counter: int = 0,
                 domain: str = "device", key: tuple[int, int] | None = None):
        self.key = derive_key(seed, domain) if key is None else key
        self.stream_id = int(stream_id)
        self.counter = int(counter)

    def copy(self) -> "RandomStream":
        return RandomStream(key=self.key, stream_id=self.stream_id, counter=self.counter)

    def uniform(self) -> float:
        u = uniforms(self.key, self.stream_id, self.counter)[0]
        self.counter += 1
        return float(u)

    def normal(self) -> float:
        return float(ndtri(self.uniform()))

    def truncated_normal(self, mean: float, sigma: float) -> float:
        x = truncated_normals(self.key, self.stream_id, self.counter, mean, sigma)[0]
        self.counter += 1
        return float(x)

    def __repr__(self) -> str:
        return f"RandomStream(stream_id={self.stream_id}, counter={self.counter})"
