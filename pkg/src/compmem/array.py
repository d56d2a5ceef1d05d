"""An array of simulated PCM devices with bulk write and read."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as _rng
from .device import DeviceParams, DeviceState, Pulse, PulseKind, conductance, integrate_set

__all__ = ["ArrayConfig", "MemoryArray", "write_conductance_csv"]

DEVICE_DOMAIN = "device"


@dataclass(frozen=True)
class ArrayConfig:
    n_devices: int
    params: DeviceParams = field(default_factory=DeviceParams)
    master_seed: int = 0

    def __post_init__(self):
        if int(self.n_devices) < 1:
            raise ValueError(f"n_devices must be >= 1, got {self.n_devices}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed}")


class MemoryArray:
    """Device state held as flat vectors, one entry per device.

    Randomness for device ``i`` comes from the keyed stream
    ``(master_seed, i, event_counter[i])`` so bulk calls give identical
    results for any batching or worker count.
    """

    def __init__(self, config: ArrayConfig, workers: int = 1):
        self.config = config
        self.params = config.params
        self.n = int(config.n_devices)
        self.workers = max(1, int(workers))
        self.key = _rng.derive_key(int(config.master_seed), DEVICE_DOMAIN)
        u0 = self.params.u_a0_mean
        self.u_a = np.full(self.n, u0, dtype=np.float64)
        self.u_a0 = np.full(self.n, u0, dtype=np.float64)
        self.resets_seen = np.zeros(self.n, dtype=np.int64)
        self.pulses_seen = np.zeros(self.n, dtype=np.int64)
        self.age = np.zeros(self.n, dtype=np.float64)
        self.counters = np.zeros(self.n, dtype=np.int64)

    def __len__(self) -> int:
        return self.n

    def copy(self) -> "MemoryArray":
        other = MemoryArray(self.config, self.workers)
        for name in ("u_a", "u_a0", "resets_seen", "pulses_seen", "age", "counters"):
            setattr(other, name, getattr(self, name).copy())
        return other

    # -- helpers --------------------------------------------------------

    def _ids(self, selected) -> np.ndarray:
        if selected is None:
            return np.arange(self.n, dtype=np.int64)
        ids = np.asarray(list(selected) if isinstance(selected, (set, frozenset)) else selected)
        if ids.size == 0:
            return np.zeros(0, dtype=np.int64)
        if ids.dtype == bool:
            if ids.shape != (self.n,):
                raise ValueError(f"boolean mask must have length {self.n}")
            return np.flatnonzero(ids)
        if not np.issubdtype(ids.dtype, np.integer):
            raise TypeError(f"device ids must be integers, got {ids.dtype}")
        ids = np.unique(ids.astype(np.int64).ravel())
        if ids[0] < 0 or ids[-1] >= self.n:
            bad = ids[(ids < 0) | (ids >= self.n)]
            raise IndexError(f"device id(s) out of range [0, {self.n}): {bad[:5].tolist()}")
        return ids

    def _chunks(self, ids: np.ndarray) -> list[np.ndarray]:
        if self.workers == 1 or ids.size < 2 * self.workers:
            return [ids]
        return np.array_split(ids, self.workers)

    def device_state(self, i: int) -> DeviceState:
        return DeviceState(u_a=float(self.u_a[i]), u_a0=float(self.u_a0[i]),
                           resets_seen=int(self.resets_seen[i]), pulses_seen=int(self.pulses_seen[i]),
                           age=float(self.age[i]))

    def stream(self, i: int) -> _rng.RandomStream:
        """The random stream of device ``i`` at its current position."""
        return _rng.RandomStream(key=self.key, stream_id=i, counter=int(self.counters[i]))

    # -- bulk operations -----------------------------------------------

    def reset(self, selected=None) -> "MemoryArray":
        """RESET the selected devices (all when ``selected`` is None)."""
        ids = self._ids(selected)
        p = self.params
        self.u_a0[ids] = _rng.truncated_normals(self.key, ids, self.counters[ids], p.u_a0_mean, p.u_a0_sigma)
        self.u_a[ids] = self.u_a0[ids]
        self.counters[ids] += 1
        self.resets_seen[ids] += 1
        self.age[ids] = 0.0
        return self

    def reset_all(self) -> "MemoryArray":
        return self.reset(None)

    def pulse_subset(self, selected, pulse: Pulse) -> "MemoryArray":
        """Apply one SET pulse to every selected device.

        All ids are checked before any device is touched.
        """
        if pulse.kind is not PulseKind.SET:
            raise ValueError("pulse_subset applies SET pulses; use reset() for RESET")
        ids = self._ids(selected)
        if ids.size == 0:
            return self
        chunks = self._chunks(ids)
        if len(chunks) == 1:
            integrate_set(self.params, self.u_a, ids, pulse.amplitude, pulse.duration)
        else:
            # disjoint index chunks: each worker owns its devices exclusively
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                list(pool.map(lambda c: integrate_set(self.params, self.u_a, c, pulse.amplitude,
                                                      pulse.duration), chunks))
        self.pulses_seen[ids] += 1
        self.age[ids] = 0.0
        return self

    def advance(self, dt: float) -> "MemoryArray":
        self.age += dt
        return self

    def conductance(self, selected=None) -> np.ndarray:
        """Noise-free conductance (no stream events consumed)."""
        ids = self._ids(selected)
        return conductance(self.params, self.u_a[ids], self.u_a0[ids], self.age[ids])

    def read_all(self, selected=None) -> np.ndarray:
        """Read conductances (uS); read noise consumes one event per device."""
        ids = self._ids(selected)
        g = self.conductance(ids)
        if self.params.read_noise_rel > 0:
            z = _rng.normals(self.key, ids, self.counters[ids])
            self.counters[ids] += 1
            g = g * (1.0 + self.params.read_noise_rel * z)
        return np.maximum(g, 0.0)


def write_conductance_csv(path, g: np.ndarray) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["device_id", "conductance_uS"])
        for i, v in enumerate(np.asarray(g, dtype=float)):
            w.writerow([i, repr(float(v))])
    return path
