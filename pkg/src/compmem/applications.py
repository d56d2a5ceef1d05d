"""Two further uses of crystallization by accumulation: divisibility checks and
non-negative matrix-vector products."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array import MemoryArray
from .device import DeviceParams, DeviceState, Pulse, apply_set, conductance, growth_velocity, integrate_set

__all__ = [
    "CalibrationError",
    "FactorProbeConfig",
    "is_factor",
    "matvec_estimate",
    "relative_l2_error",
]


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FactorProbeConfig:
    """Probe for "does x divide y" on one device.

    ``pulse`` is calibrated so that, from a fresh RESET, the conductance first
    reaches ``threshold`` on exactly the x-th pulse.
    """

    x: int
    y: int
    threshold: float
    pulse: Pulse

    def __post_init__(self):
        if int(self.x) < 1 or int(self.y) < 1:
            raise ValueError(f"x and y must be >= 1, got x={self.x}, y={self.y}")

    @classmethod
    def calibrated(cls, x: int, y: int, params: DeviceParams, threshold: float | None = None,
                   amplitude: float = 80.0) -> "FactorProbeConfig":
        """Pick the SET duration for candidate factor ``x`` and verify it.

        Each pulse crystallizes ``f * u_a0 / (x - 1/2)`` nm, where ``f`` is the
        crystallized fraction at ``threshold``; pulse ``x`` then overshoots
        the threshold by half a pulse and pulse ``x - 1`` stays half a pulse
        short, which keeps the crossing index robust to rounding.
        """
        if threshold is None:
            threshold = params.g_min + 0.4 * (params.g_max - params.g_min)
        frac = (threshold - params.g_min) / (params.g_max - params.g_min)
        if not 0 < frac < 1:
            raise CalibrationError(f"threshold {threshold} uS outside (g_min, g_max)")
        growth = float(growth_velocity(params, params.u_a0_mean, amplitude))
        if growth <= 0:
            raise CalibrationError(f"no crystal growth at {amplitude} uA")
        step = frac * params.u_a0_mean / (x - 0.5)
        if step * x >= params.u_a0_mean:
            raise CalibrationError(f"threshold too high to be reached in {x} pulse(s) before saturation")
        cfg = cls(int(x), int(y), float(threshold), Pulse.set(amplitude, step / growth))
        cfg.verify(params)
        return cfg

    def verify(self, params: DeviceParams) -> None:
        """Noise-free check that the first crossing happens on pulse ``x``."""
        st = DeviceState.fresh(params)
        for n in range(1, self.x + 1):
            st = apply_set(st, self.pulse, params)
            crossed = float(conductance(params, st.u_a, st.u_a0)) >= self.threshold
            if crossed != (n == self.x):
                raise CalibrationError(
                    f"calibration failed for x={self.x}: crossing state {crossed} after pulse {n}")


def is_factor(cfg: FactorProbeConfig, array: MemoryArray, device: int = 0) -> bool:
    """Apply ``y`` pulses, re-initializing after every threshold crossing
    except one caused by the final pulse; report whether the last read is
    at or above threshold."""
    ids = [device]
    array.reset(ids)
    g = float(array.read_all(ids)[0])
    for n in range(1, cfg.y + 1):
        array.pulse_subset(ids, cfg.pulse)
        g = float(array.read_all(ids)[0])
        if g >= cfg.threshold and n < cfg.y:
            array.reset(ids)
    return g >= cfg.threshold


def _read_avg(array: MemoryArray, ids: np.ndarray, n_reads: int) -> np.ndarray:
    acc = np.zeros(ids.size)
    for _ in range(n_reads):
        acc += array.read_all(ids)
    return acc / n_reads


def _trajectory(params: DeviceParams, amplitude: float, u_top: float, dt: float = 1.0):
    """Elapsed SET time as a function of thickness along the single trajectory
    ``du/dt = -v_g`` at fixed ``amplitude`` (the ODE is autonomous, so every
    device moves along this curve).  Returns ``(u ascending, t(u))``."""
    u = np.array([u_top])
    idx = np.zeros(1, dtype=np.int64)
    us, ts = [u_top], [0.0]
    while u[0] > 0.0:
        integrate_set(params, u, idx, amplitude, dt)
        if u[0] >= us[-1]:
            raise ValueError(f"no crystal growth at {amplitude} uA below {us[-1]:.3g} nm")
        us.append(float(u[0]))
        ts.append(ts[-1] + dt)
    return np.array(us[::-1]), np.array(ts[::-1])


def _fit_u0(frac_ref, ref_len, curve, lo, hi, iters=60):
    """Per-device initial thickness such that a pulse of ``ref_len`` ns
    crystallizes the observed fraction ``frac_ref``."""
    us, ts = curve
    lo = np.full(frac_ref.shape, lo)
    hi = np.full(frac_ref.shape, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        elapsed = np.interp(mid * (1.0 - frac_ref), us, ts) - np.interp(mid, us, ts)
        # a thicker start needs longer to crystallize the same fraction
        too_thick = elapsed > ref_len
        hi = np.where(too_thick, mid, hi)
        lo = np.where(too_thick, lo, mid)
    return 0.5 * (lo + hi)


def matvec_estimate(A, x, array: MemoryArray, amplitude: float = 80.0, scale: float | None = None,
                    fill: float = 0.8, calibrate: bool = True, ref_fraction: float = 0.2,
                    n_reads: int = 16) -> np.ndarray:
    """Estimate ``A @ x`` for non-negative ``A`` (N x N) and ``x`` with N devices.

    Device ``i`` accumulates one SET pulse of duration ``scale * A[i, j] * x[j]``
    for every ``j``, so its total SET time is proportional to the row sum.
    The time is recovered from conductance through the device's own
    crystallization trajectory, which absorbs the dependence of growth speed
    on thickness.  With ``calibrate`` a reference pulse of known length is
    applied first and fixes each device's RESET thickness; otherwise the
    nominal thickness is assumed.

    ``scale`` is in ns per unit of ``A[i, j] * x[j]``; by default it is chosen so
    the largest row uses ``fill`` of the worst-case amorphous thickness.
    Every conductance read is averaged over ``n_reads`` reads.
    """
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float).ravel()
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[1] != x.size:
        raise ValueError(f"need an N x N matrix and length-N vector, got {A.shape} and {x.shape}")
    if (A < 0).any() or (x < 0).any() or not (np.isfinite(A).all() and np.isfinite(x).all()):
        raise ValueError("matrix and vector entries must be finite and non-negative")
    n = x.size
    if array.n < n:
        raise ValueError(f"array has {array.n} devices, need {n}")
    params = array.params
    growth = float(growth_velocity(params, params.u_a0_mean, amplitude))
    if growth <= 0:
        raise ValueError(f"no crystal growth at {amplitude} uA")
    products = A * x[None, :]
    totals = products.sum(axis=1)
    if not totals.any():
        return np.zeros(n)

    u_thin = max(params.u_a0_mean - 4.0 * params.u_a0_sigma, 0.0)
    u_top = params.u_a0_mean + 4.0 * params.u_a0_sigma
    curve = _trajectory(params, amplitude, u_top)
    us, ts = curve
    # worst case: the thinnest device and the slowest stretch of its trajectory
    window = np.interp((1.0 - fill) * u_thin, us, ts) - np.interp(u_thin, us, ts)
    ref_len = ref_fraction * window if calibrate else 0.0
    product_window = window - ref_len
    if scale is None:
        scale = product_window / totals.max()
    elif scale * totals.max() > product_window * (1 + 1e-12):
        raise ValueError("pulse sequence exceeds the crystallization window; reduce scale")

    ids = np.arange(n)
    array.reset(ids)
    span = params.g_max - params.g_min

    def fraction():
        return np.clip((_read_avg(array, ids, n_reads) - params.g_min) / span, 0.0, 1.0)

    if calibrate:
        array.pulse_subset(ids, Pulse.set(amplitude, ref_len))
        f_ref = fraction()
        u0 = _fit_u0(f_ref, ref_len, curve, max(u_thin - params.u_a0_sigma, 1e-9), u_top)
    else:
        u0 = np.full(n, params.u_a0_mean)
    durations = scale * products
    for j in range(n):
        col = durations[:, j]
        for dur in np.unique(col[col > 0]):
            array.pulse_subset(np.flatnonzero(col == dur), Pulse.set(amplitude, float(dur)))
    f_end = fraction()

    start = u0 * (1.0 - f_ref) if calibrate else u0
    pulse_time = np.interp(u0 * (1.0 - f_end), us, ts) - np.interp(start, us, ts)
    return pulse_time / scale


def relative_l2_error(estimate, exact) -> float:
    exact = np.asarray(exact, dtype=float)
    norm = np.linalg.norm(exact)
    diff = np.linalg.norm(np.asarray(estimate, dtype=float) - exact)
    return float(diff / norm) if norm else float(diff)
