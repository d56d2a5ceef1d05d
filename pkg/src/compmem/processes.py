"""Correlated binary stochastic processes.

A hidden reference process ``X_r`` fires with probability ``p``.  Each
correlated process then fires with probability ``p + sqrt(c) (1 - p)`` when
``X_r`` fired and ``p (1 - sqrt(c))`` otherwise, which keeps its marginal
rate at ``p`` while making any two correlated processes have correlation
coefficient ``c``.  Uncorrelated processes fire independently with ``p``.

Bits are a pure function of ``(seed, process, step)``; steps are produced in
blocks and handed out one at a time, so the full ``K x N`` matrix is never
held in memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .rng import _threefry_block, _to_unit, derive_key

__all__ = [
    "EnsembleConfig",
    "ProcessEnsemble",
    "MatrixEnsemble",
    "conditional_probabilities",
    "subset_from_image",
]

PROCESS_DOMAIN = "process"
REFERENCE_ID = 0xFFFFFFFF
BLOCK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class EnsembleConfig:
    n: int
    n_correlated: int
    p: float
    c: float
    seed: int = 0
    k_steps: int = 1000

    def violations(self, prefix: str = "ensemble") -> list[tuple[str, str]]:
        out = []
        if not self.n >= 1:
            out.append((f"{prefix}.n", f"must be >= 1, got {self.n}"))
        if self.n >= REFERENCE_ID:
            out.append((f"{prefix}.n", "must be < 2**32 - 1"))
        if not 0 <= self.n_correlated <= self.n:
            out.append((f"{prefix}.n_correlated", f"must be in [0, n={self.n}], got {self.n_correlated}"))
        if not 0.0 <= self.p <= 0.5:
            out.append((f"{prefix}.p", f"must be in [0, 0.5], got {self.p}"))
        if not 0.0 <= self.c <= 1.0:
            out.append((f"{prefix}.c", f"must be in [0, 1], got {self.c}"))
        if not self.k_steps >= 1:
            out.append((f"{prefix}.k_steps", f"must be >= 1, got {self.k_steps}"))
        if not 0 <= self.seed < 2**64:
            out.append((f"{prefix}.seed", "must be an unsigned 64-bit integer"))
        if self.k_steps > REFERENCE_ID:
            out.append((f"{prefix}.k_steps", "must fit in 32 bits"))
        return out


def conditional_probabilities(p: float, c: float) -> tuple[float, float]:
    """Firing probability of a correlated process given ``X_r = 1`` and ``X_r = 0``."""
    s = math.sqrt(c)
    return p + s * (1.0 - p), p * (1.0 - s)


@nb.njit(cache=True, nogil=True)
def _bits_block(k0, k1, k_start, p, q_on, q_off, correlated, out, ref):
    n_steps, n = out.shape
    for s in range(n_steps):
        k = k_start + s
        w0, w1 = _threefry_block(k0, k1, 0xFFFFFFFF, k)
        xr = _to_unit(w0, w1) < p
        ref[s] = xr
        q = q_on if xr else q_off
        for i in range(n):
            w0, w1 = _threefry_block(k0, k1, i, k)
            u = _to_unit(w0, w1)
            if correlated[i]:
                out[s, i] = u < q
            else:
                out[s, i] = u < p


class _StreamingBase:
    """Cursor bookkeeping shared by the ensemble types."""

    n: int
    k_steps: int
    labels: np.ndarray | None

    def __init__(self):
        self.k = 0

    @property
    def exhausted(self) -> bool:
        return self.k >= self.k_steps

    def rewind(self) -> None:
        self.k = 0

    def __iter__(self):
        while not self.exhausted:
            yield self.step()

    def step(self) -> np.ndarray:
        if self.exhausted:
            raise RuntimeError(f"ensemble exhausted after {self.k_steps} steps")
        x = self._row(self.k)
        self.k += 1
        return x

    def _row(self, k: int) -> np.ndarray:
        raise NotImplementedError


class ProcessEnsemble(_StreamingBase):
    """Streaming generator of ``N`` binary processes.

    ``labels`` marks the correlated processes; by default the first
    ``n_correlated`` processes are correlated.
    """

    def __init__(self, config: EnsembleConfig, labels=None):
        errs = config.violations()
        if errs:
            raise ValueError(f"{errs[0][0]}: {errs[0][1]}")
        super().__init__()
        self.config = config
        self.n = int(config.n)
        self.k_steps = int(config.k_steps)
        if labels is None:
            labels = np.zeros(self.n, dtype=bool)
            labels[: config.n_correlated] = True
        labels = np.asarray(labels).astype(bool).ravel()
        if labels.shape != (self.n,):
            raise ValueError(f"labels must have length {self.n}")
        if int(labels.sum()) != config.n_correlated:
            raise ValueError(f"labels mark {int(labels.sum())} correlated processes, "
                             f"config says {config.n_correlated}")
        labels.setflags(write=False)
        self.labels = labels
        self.key = derive_key(int(config.seed), PROCESS_DOMAIN)
        self.q_on, self.q_off = conditional_probabilities(config.p, config.c)
        self._block_steps = max(1, min(self.k_steps, BLOCK_ELEMENTS // self.n))
        self._block_start = -1
        self._block = None
        self._ref = None

    @property
    def expected_momentum(self) -> float:
        return self.n * self.config.p

    def replay(self) -> "ProcessEnsemble":
        """A fresh, unconsumed copy producing the same streams."""
        return ProcessEnsemble(self.config, self.labels.copy())

    def block(self, k_start: int, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
        """Bits for steps ``k_start .. k_start + n_steps - 1`` plus reference bits."""
        out = np.empty((n_steps, self.n), dtype=np.uint8)
        ref = np.empty(n_steps, dtype=np.uint8)
        _bits_block(np.int64(self.key[0]), np.int64(self.key[1]), np.int64(k_start),
                    float(self.config.p), self.q_on, self.q_off, self.labels, out, ref)
        return out, ref

    def _row(self, k: int) -> np.ndarray:
        start = self._block_start
        if self._block is None or not start <= k < start + self._block.shape[0]:
            n_steps = min(self._block_steps, self.k_steps - k)
            self._block, self._ref = self.block(k, n_steps)
            self._block.setflags(write=False)
            self._block_start = k
        return self._block[k - self._block_start]

    def reference_bit(self, k: int) -> int:
        """Value of the hidden reference process at step ``k``."""
        return int(self.block(k, 1)[1][0])


class MatrixEnsemble(_StreamingBase):
    """Replays a stored ``(K, N)`` bit matrix (small or recorded data)."""

    def __init__(self, bits, labels=None):
        super().__init__()
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ValueError("bit matrix must be 2-D (steps x processes)")
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("bit matrix must contain only 0/1")
        self.bits = np.ascontiguousarray(bits, dtype=np.uint8)
        self.bits.setflags(write=False)
        self.k_steps, self.n = self.bits.shape
        if labels is not None:
            labels = np.asarray(labels).astype(bool).ravel()
            if labels.shape != (self.n,):
                raise ValueError(f"labels must have length {self.n}")
            labels.setflags(write=False)
        self.labels = labels

    @property
    def expected_momentum(self) -> float:
        return float(self.bits.mean(axis=0).sum()) if self.k_steps else 0.0

    def replay(self) -> "MatrixEnsemble":
        return MatrixEnsemble(self.bits, None if self.labels is None else self.labels.copy())

    def _row(self, k: int) -> np.ndarray:
        return self.bits[k]


def subset_from_image(image, n: int | None = None) -> tuple[np.ndarray, int]:
    """Row-major label vector from a binary raster (1 = white = correlated)."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("image must be a 2-D raster")
    if not np.isin(image, (0, 1)).all():
        raise ValueError("image must be binary: pixel values other than 0/1 found")
    if n is not None and image.size != n:
        raise ValueError(f"raster has {image.size} pixels but N = {n}")
    labels = image.astype(bool).ravel(order="C")
    return labels, int(labels.sum())
