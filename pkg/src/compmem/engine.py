"""Correlation detection by accumulation in PCM devices.

At every step the collective momentum ``M(k)`` (number of active processes)
sets one shared SET pulse, which is applied to the devices of all active
processes.  Devices of mutually correlated processes receive more and
stronger pulses and end up at higher conductance.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .array import MemoryArray
from .baselines import kmeans_1d
from .device import Pulse

__all__ = [
    "EngineConfig",
    "RunResult",
    "momentum",
    "schedule_pulse",
    "resolve_config",
    "run",
    "classify",
    "classification_metrics",
]

AUTO_SCALE_FRACTION = 0.8


@dataclass(frozen=True)
class EngineConfig:
    modulation: str = "amplitude"  # or "duration"
    current_scale: float = 0.002  # uA per unit momentum
    pulse_duration: float = 50.0  # ns, amplitude mode
    i_min: float = 25.0
    i_max: float = 80.0
    duration_scale: float = 0.01  # ns per unit momentum, duration mode
    set_amplitude: float = 80.0  # uA, duration mode
    duration_min: float = 0.0
    duration_max: float = math.inf
    replicas: int = 1
    readout_period: int = 100
    classify_threshold: float = 2.0  # uS
    classifier: str = "threshold"  # or "kmeans"
    auto_scale: bool = False
    step_time: float = 0.0  # ns of idle time per step (drift only)

    def violations(self, prefix: str = "engine") -> list[tuple[str, str]]:
        out = []

        def bad(key, msg):
            out.append((f"{prefix}.{key}", msg))

        if self.modulation not in ("amplitude", "duration"):
            bad("modulation", f"must be 'amplitude' or 'duration', got {self.modulation!r}")
        if self.classifier not in ("threshold", "kmeans"):
            bad("classifier", f"must be 'threshold' or 'kmeans', got {self.classifier!r}")
        if not self.i_min > 0:
            bad("i_min", f"must be > 0, got {self.i_min}")
        if not self.i_min <= self.i_max:
            out.append((f"{prefix}.i_min, {prefix}.i_max",
                        f"need i_min <= i_max, got i_min={self.i_min} > i_max={self.i_max}"))
        if not self.current_scale >= 0:
            bad("current_scale", f"must be >= 0, got {self.current_scale}")
        if not self.pulse_duration > 0:
            bad("pulse_duration", f"must be > 0, got {self.pulse_duration}")
        if not self.duration_scale >= 0:
            bad("duration_scale", f"must be >= 0, got {self.duration_scale}")
        if not self.set_amplitude >= 0:
            bad("set_amplitude", f"must be >= 0, got {self.set_amplitude}")
        if not 0 <= self.duration_min <= self.duration_max:
            out.append((f"{prefix}.duration_min, {prefix}.duration_max",
                        f"need 0 <= duration_min <= duration_max, got {self.duration_min}, {self.duration_max}"))
        if not (isinstance(self.replicas, int) and self.replicas >= 1):
            bad("replicas", f"must be an integer >= 1, got {self.replicas}")
        if not (isinstance(self.readout_period, int) and self.readout_period >= 1):
            bad("readout_period", f"must be an integer >= 1, got {self.readout_period}")
        if not self.step_time >= 0:
            bad("step_time", f"must be >= 0, got {self.step_time}")
        return out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if math.isinf(d["duration_max"]):
            d["duration_max"] = "inf"
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown engine parameter(s): {sorted(unknown)}")
        data = dict(data)
        if isinstance(data.get("duration_max"), str):
            data["duration_max"] = float(data["duration_max"])
        return cls(**data)


@dataclass
class RunResult:
    config: EngineConfig  # with auto-scaling resolved
    snapshots: list[np.ndarray]  # per-device conductance (uS) at each readout
    snapshot_steps: list[int]  # 1-based number of steps completed at each readout
    mean_conductance: np.ndarray  # per process, averaged over replicas
    predicted: np.ndarray  # bool, True = correlated
    threshold: float
    momentum: np.ndarray
    pulses_applied: int
    metrics: dict | None = field(default=None)


def momentum(x) -> int:
    """Number of active processes in one step."""
    return int(np.count_nonzero(x))


def schedule_pulse(m: int, cfg: EngineConfig) -> Pulse | None:
    """The SET pulse for momentum ``m``, or None when below the programming floor."""
    if m <= 0:
        return None
    if cfg.modulation == "amplitude":
        amp = min(cfg.current_scale * m, cfg.i_max)
        if amp < cfg.i_min or amp <= 0:
            return None
        return Pulse.set(amp, cfg.pulse_duration)
    dur = min(cfg.duration_scale * m, cfg.duration_max)
    if dur < cfg.duration_min or dur <= 0:
        return None
    return Pulse.set(cfg.set_amplitude, dur)


def resolve_config(cfg: EngineConfig, expected_momentum: float) -> EngineConfig:
    """Apply ``auto_scale``: the expected momentum maps to 0.8 x the floor."""
    if not cfg.auto_scale:
        return cfg
    if expected_momentum <= 0:
        raise ValueError("auto_scale needs a positive expected momentum")
    if cfg.modulation == "amplitude":
        return dataclasses.replace(cfg, current_scale=AUTO_SCALE_FRACTION * cfg.i_min / expected_momentum)
    if cfg.duration_min <= 0:
        raise ValueError("auto_scale in duration mode needs duration_min > 0")
    return dataclasses.replace(cfg, duration_scale=AUTO_SCALE_FRACTION * cfg.duration_min / expected_momentum)


def classify(mean_conductances, threshold: float) -> np.ndarray:
    """True (correlated) where conductance >= threshold."""
    return np.asarray(mean_conductances, dtype=float) >= threshold


def classification_metrics(predicted, truth) -> dict:
    predicted = np.asarray(predicted, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    tn = int(np.sum(~predicted & ~truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "tp": tp, "fp": fp, "fn": fn, "tn": tn,
        "precision": precision, "recall": recall, "f1": f1,
        "accuracy": (tp + tn) / len(truth) if len(truth) else 0.0,
    }


def _device_ids(active: np.ndarray, d: int) -> np.ndarray:
    if d == 1:
        return active
    return (active[:, None] * d + np.arange(d)).ravel()


def run(ensemble, array: MemoryArray, cfg: EngineConfig, reset: bool = True) -> RunResult:
    """Stream ``ensemble`` through ``array``.

    Process ``i`` owns devices ``i*d .. i*d + d - 1``.  Conductances are read
    every ``readout_period`` steps and after the last step; the final read
    drives classification.
    """
    errs = cfg.violations()
    if errs:
        raise ValueError(f"{errs[0][0]}: {errs[0][1]}")
    d = cfg.replicas
    if array.n != ensemble.n * d:
        raise ValueError(f"array has {array.n} devices, need N*d = {ensemble.n}*{d} = {ensemble.n * d}")
    if ensemble.k != 0:
        raise ValueError("ensemble has already been (partly) consumed")
    cfg = resolve_config(cfg, ensemble.expected_momentum)
    if reset:
        array.reset_all()

    k_total = ensemble.k_steps
    moms = np.zeros(k_total, dtype=np.int64)
    snaps, snap_steps = [], []
    applied = 0
    for k, x in enumerate(ensemble):
        m = momentum(x)
        moms[k] = m
        pulse = schedule_pulse(m, cfg)
        if pulse is not None:
            array.pulse_subset(_device_ids(np.flatnonzero(x), d), pulse)
            applied += 1
        if cfg.step_time:
            array.advance(cfg.step_time)
        if (k + 1) % cfg.readout_period == 0 or k + 1 == k_total:
            snaps.append(array.read_all())
            snap_steps.append(k + 1)

    means = snaps[-1].reshape(ensemble.n, d).mean(axis=1)
    if cfg.classifier == "kmeans":
        km = kmeans_1d(means, 2)
        predicted = km.labels == 1
        threshold = km.threshold
    else:
        threshold = cfg.classify_threshold
        predicted = classify(means, threshold)
    labels = getattr(ensemble, "labels", None)
    metrics = classification_metrics(predicted, labels) if labels is not None else None
    return RunResult(config=cfg, snapshots=snaps, snapshot_steps=snap_steps, mean_conductance=means,
                     predicted=predicted, threshold=float(threshold), momentum=moms,
                     pulses_applied=applied, metrics=metrics)
