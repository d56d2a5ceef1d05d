"""Simulated computational phase-change memory and temporal correlation detection."""

__version__ = "0.1.0"

from .array import ArrayConfig, MemoryArray
from .baselines import WeightVector, covariance_matrix, expected_weights, kmeans_1d, weights_streaming
from .device import DeviceParams, DeviceState, Pulse, PulseKind, apply_set, read_conductance, reset
from .engine import EngineConfig, RunResult, classify, momentum, run, schedule_pulse
from .processes import EnsembleConfig, MatrixEnsemble, ProcessEnsemble, subset_from_image
from .rng import RandomStream

__all__ = [
    "ArrayConfig",
    "DeviceParams",
    "DeviceState",
    "EngineConfig",
    "EnsembleConfig",
    "MatrixEnsemble",
    "MemoryArray",
    "ProcessEnsemble",
    "Pulse",
    "PulseKind",
    "RandomStream",
    "RunResult",
    "WeightVector",
    "apply_set",
    "classify",
    "covariance_matrix",
    "expected_weights",
    "kmeans_1d",
    "momentum",
    "read_conductance",
    "reset",
    "run",
    "schedule_pulse",
    "subset_from_image",
    "weights_streaming",
]
