"""Single-device phase-change memory physics.

The internal state is the effective amorphous thickness ``u_a`` (nm).  A SET
pulse of current ``I`` dissipates ``P = power_per_current * I`` and holds the
amorphous/crystalline interface at

    T_int = R_th(u_a) * P + T_amb

while the interface moves with ``du_a/dt = -v_g(T_int)``.  ``R_th`` and
``v_g`` are piecewise-linear tables.  A RESET re-draws the initial thickness.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np

from .rng import RandomStream

__all__ = [
    "DeviceParams",
    "DeviceState",
    "Pulse",
    "PulseKind",
    "RESET_PULSE",
    "apply_set",
    "conductance",
    "growth_velocity",
    "interface_temperature",
    "read_conductance",
    "reset",
    "advance",
]

# v_g anchor rules: negligible growth up to 550 K, peak near 750 K
NEGLIGIBLE_GROWTH_TEMP = 550.0
PEAK_GROWTH_TEMP = 750.0
NEGLIGIBLE_FRACTION = 0.01
PEAK_FRACTION = 0.95

DEFAULT_VG_TABLE = (
    (300.0, 0.0),
    (550.0, 0.0),
    (575.0, 0.0008),
    (600.0, 0.0025),
    (625.0, 0.0055),
    (650.0, 0.0100),
    (675.0, 0.0180),
    (700.0, 0.0300),
    (725.0, 0.0420),
    (750.0, 0.0500),
    (790.0, 0.0496),
    (840.0, 0.0485),
    (870.0, 0.0420),
    (890.0, 0.0200),
    (900.0, 0.0),
)

DEFAULT_RTH_TABLE = (
    (0.0, 5.30),
    (3.0, 5.34),
    (10.0, 5.31),
    (20.0, 5.27),
    (40.0, 5.23),
    (60.0, 5.20),
    (80.0, 5.17),
    (120.0, 5.12),
)


def _as_table(pairs) -> tuple[tuple[float, float], ...]:
    return tuple((float(x), float(y)) for x, y in pairs)


@dataclass(frozen=True)
class DeviceParams:
    """Physics constants of one PCM device type.

    Units: lengths nm, times ns, temperatures K, conductances uS, currents uA,
    power uW, thermal resistance K/uW, growth velocity nm/ns.
    """

    u_a0_mean: float = 60.0
    u_a0_sigma: float = 3.0
    v_g_table: tuple = DEFAULT_VG_TABLE
    r_th_table: tuple = DEFAULT_RTH_TABLE
    t_amb: float = 300.0
    t_melt: float = 900.0
    g_min: float = 0.1
    g_max: float = 25.0
    power_per_current: float = 1.0
    read_noise_rel: float = 0.05
    drift_nu: float = 0.0
    drift_t0: float = 1000.0
    ode_step: float = 1.0
    max_step_du: float = 0.5
    _vg: tuple = field(init=False, repr=False, compare=False)
    _rth: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "v_g_table", _as_table(self.v_g_table))
        object.__setattr__(self, "r_th_table", _as_table(self.r_th_table))
        vg = np.array(self.v_g_table, dtype=np.float64).reshape(-1, 2)
        rth = np.array(self.r_th_table, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "_vg", (np.ascontiguousarray(vg[:, 0]), np.ascontiguousarray(vg[:, 1])))
        object.__setattr__(self, "_rth", (np.ascontiguousarray(rth[:, 0]), np.ascontiguousarray(rth[:, 1])))

    @classmethod
    def constant_growth(cls, growth: float = 0.05, r_th: float = 5.2, **overrides) -> "DeviceParams":
        """Parameters where ``v_g`` is the constant ``growth`` over the whole
        sub-melt window above 550 K and ``R_th`` does not depend on ``u_a``.

        Any fixed amplitude that lands ``T_int`` inside the window then
        crystallizes at exactly ``growth`` nm/ns.
        """
        t_melt = overrides.get("t_melt", 900.0)
        vg = ((300.0, 0.0), (NEGLIGIBLE_GROWTH_TEMP, 0.0),
              (NEGLIGIBLE_GROWTH_TEMP + 10.0, growth), (t_melt - 10.0, growth), (t_melt, 0.0))
        rth = ((0.0, r_th), (1000.0, r_th))
        kw = dict(v_g_table=vg, r_th_table=rth)
        kw.update(overrides)
        return cls(**kw)

    def noise_free(self) -> "DeviceParams":
        """Same physics with variability, read noise and drift switched off."""
        return replace(self, u_a0_sigma=0.0, read_noise_rel=0.0, drift_nu=0.0)

    def to_dict(self) -> dict:
        return {
            "u_a0_mean": self.u_a0_mean,
            "u_a0_sigma": self.u_a0_sigma,
            "v_g_table": [list(p) for p in self.v_g_table],
            "r_th_table": [list(p) for p in self.r_th_table],
            "t_amb": self.t_amb,
            "t_melt": self.t_melt,
            "g_min": self.g_min,
            "g_max": self.g_max,
            "power_per_current": self.power_per_current,
            "read_noise_rel": self.read_noise_rel,
            "drift_nu": self.drift_nu,
            "drift_t0": self.drift_t0,
            "ode_step": self.ode_step,
            "max_step_du": self.max_step_du,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceParams":
        known = {f for f in cls.__dataclass_fields__ if not f.startswith("_")}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown device parameter(s): {sorted(unknown)}")
        return cls(**data)

    def violations(self, prefix: str = "device") -> list[tuple[str, str]]:
        """All invariant violations as ``(key path, message)`` pairs."""
        out = []

        def bad(key, msg):
            out.append((f"{prefix}.{key}", msg))

        scalars = {k: v for k, v in self.to_dict().items() if not k.endswith("_table")}
        for k, v in scalars.items():
            if not math.isfinite(v):
                bad(k, f"must be finite, got {v}")
        if not self.u_a0_mean > 0:
            bad("u_a0_mean", f"must be > 0, got {self.u_a0_mean}")
        if not self.u_a0_sigma >= 0:
            bad("u_a0_sigma", f"must be >= 0, got {self.u_a0_sigma}")
        if not self.g_min >= 0:
            bad("g_min", f"must be >= 0, got {self.g_min}")
        if not self.g_max > self.g_min:
            bad("g_max", f"g_max ({self.g_max}) must exceed g_min ({self.g_min})")
        if not self.ode_step > 0:
            bad("ode_step", f"must be > 0, got {self.ode_step}")
        if not self.max_step_du > 0:
            bad("max_step_du", f"must be > 0, got {self.max_step_du}")
        if not self.t_melt > self.t_amb:
            bad("t_melt", f"t_melt ({self.t_melt}) must exceed t_amb ({self.t_amb})")
        for k in ("power_per_current", "read_noise_rel", "drift_nu"):
            if not getattr(self, k) >= 0:
                bad(k, f"must be >= 0, got {getattr(self, k)}")
        if not self.drift_t0 > 0:
            bad("drift_t0", f"must be > 0, got {self.drift_t0}")

        for key in ("v_g_table", "r_th_table"):
            table = getattr(self, key)
            if len(table) < 2:
                bad(key, "needs at least two (x, y) points")
                continue
            xs = [p[0] for p in table]
            ys = [p[1] for p in table]
            if not all(math.isfinite(v) for v in xs + ys):
                bad(key, "entries must be finite")
                continue
            if any(b <= a for a, b in zip(xs, xs[1:])):
                bad(key, "x values must be strictly increasing")
        if out:
            return out

        tx, vy = self._vg
        if vy.min() < 0:
            bad("v_g_table", "growth velocity must be non-negative")
        peak = float(vy.max())
        if peak <= 0:
            bad("v_g_table", "growth velocity is zero everywhere")
        else:
            low = tx <= NEGLIGIBLE_GROWTH_TEMP
            low_vals = np.append(vy[low], np.interp(NEGLIGIBLE_GROWTH_TEMP, tx, vy))
            worst = float(low_vals.max())
            if worst > NEGLIGIBLE_FRACTION * peak:
                bad("v_g_table", f"growth must be negligible up to {NEGLIGIBLE_GROWTH_TEMP:g} K "
                                 f"(found {worst:g} nm/ns, peak {peak:g})")
            at_peak = float(np.interp(PEAK_GROWTH_TEMP, tx, vy))
            if at_peak < PEAK_FRACTION * peak:
                bad("v_g_table", f"growth must be maximal near {PEAK_GROWTH_TEMP:g} K "
                                 f"(v_g({PEAK_GROWTH_TEMP:g} K) = {at_peak:g}, peak {peak:g})")
            hot = tx >= self.t_melt
            if (vy[hot] != 0).any() or np.interp(self.t_melt, tx, vy) != 0:
                bad("v_g_table", f"growth must vanish at and above t_melt ({self.t_melt:g} K)")

        ux, ry = self._rth
        hi = self.u_a0_mean + 4.0 * self.u_a0_sigma
        inside = (ux >= 0) & (ux <= hi)
        probe = np.concatenate([ry[inside], np.interp([0.0, hi], ux, ry)])
        if probe.min() <= 0:
            bad("r_th_table", f"thermal resistance must be positive over [0, {hi:g}] nm")
        return out

    def validate(self) -> "DeviceParams":
        errs = self.violations()
        if errs:
            key, msg = errs[0]
            raise ValueError(f"{key}: {msg}")
        return self


class PulseKind(enum.Enum):
    RESET = "RESET"
    SET = "SET"


@dataclass(frozen=True)
class Pulse:
    kind: PulseKind
    amplitude: float  # uA
    duration: float  # ns

    def __post_init__(self):
        if not (math.isfinite(self.amplitude) and math.isfinite(self.duration)):
            raise ValueError(f"pulse amplitude/duration must be finite: {self}")
        if self.amplitude < 0:
            raise ValueError(f"pulse amplitude must be >= 0, got {self.amplitude}")
        if self.duration <= 0:
            raise ValueError(f"pulse duration must be > 0, got {self.duration}")

    @classmethod
    def set(cls, amplitude: float, duration: float = 50.0) -> "Pulse":
        return cls(PulseKind.SET, float(amplitude), float(duration))


RESET_PULSE = Pulse(PulseKind.RESET, 440.0, 1000.0)


@dataclass(frozen=True)
class DeviceState:
    u_a: float
    u_a0: float
    resets_seen: int = 0
    pulses_seen: int = 0
    age: float = 0.0

    @classmethod
    def fresh(cls, params: DeviceParams) -> "DeviceState":
        """Nominal as-reset state without consuming randomness."""
        return cls(u_a=params.u_a0_mean, u_a0=params.u_a0_mean)


# ---------------------------------------------------------------- kernels

@nb.njit(cache=True, inline="always")
def _velocity(u, power, t_amb, t_melt, vg_x, vg_y, rth_x, rth_y):
    temp = np.interp(u, rth_x, rth_y) * power + t_amb
    if temp >= t_melt:
        return 0.0
    return np.interp(temp, vg_x, vg_y)


@nb.njit(cache=True)
def _integrate(u, power, duration, t_amb, t_melt, vg_x, vg_y, rth_x, rth_y, h_nom, max_du):
    # explicit Euler; a step is split further whenever it would move u by > max_du
    if u <= 0.0:
        return 0.0
    n = max(1, int(math.ceil(duration / h_nom)))
    h = duration / n
    for _ in range(n):
        v = _velocity(u, power, t_amb, t_melt, vg_x, vg_y, rth_x, rth_y)
        du = v * h
        if du > max_du:
            m = int(math.ceil(du / max_du))
            hh = h / m
            for _ in range(m):
                u -= _velocity(u, power, t_amb, t_melt, vg_x, vg_y, rth_x, rth_y) * hh
                if u <= 0.0:
                    return 0.0
        else:
            u -= du
        if u <= 0.0:
            return 0.0
    return u


@nb.njit(cache=True, nogil=True)
def _integrate_many(u_a, idx, power, duration, t_amb, t_melt, vg_x, vg_y, rth_x, rth_y, h_nom, max_du):
    for n in range(idx.shape[0]):
        i = idx[n]
        u_a[i] = _integrate(u_a[i], power, duration, t_amb, t_melt,
                            vg_x, vg_y, rth_x, rth_y, h_nom, max_du)


def integrate_set(params: DeviceParams, u_a: np.ndarray, idx: np.ndarray, amplitude: float,
                  duration: float) -> None:
    """In-place SET integration of ``u_a[idx]`` (used by the array)."""
    vg_x, vg_y = params._vg
    rth_x, rth_y = params._rth
    _integrate_many(u_a, idx, params.power_per_current * amplitude, float(duration),
                    params.t_amb, params.t_melt, vg_x, vg_y, rth_x, rth_y,
                    params.ode_step, params.max_step_du)


# ---------------------------------------------------------------- physics

def interface_temperature(params: DeviceParams, u_a, amplitude):
    rth_x, rth_y = params._rth
    return np.interp(u_a, rth_x, rth_y) * params.power_per_current * amplitude + params.t_amb


def growth_velocity(params: DeviceParams, u_a, amplitude):
    """Crystal growth velocity (nm/ns) seen by a device at thickness ``u_a``."""
    temp = np.asarray(interface_temperature(params, u_a, amplitude), dtype=float)
    vg_x, vg_y = params._vg
    v = np.interp(temp, vg_x, vg_y)
    return np.where(temp >= params.t_melt, 0.0, v)


def conductance(params: DeviceParams, u_a, u_a0, age=0.0):
    """Noise-free conductance: affine in the crystallized fraction, with drift."""
    frac = 1.0 - np.asarray(u_a, dtype=float) / np.asarray(u_a0, dtype=float)
    g = params.g_min + (params.g_max - params.g_min) * frac
    if params.drift_nu > 0:
        g = g * ((np.asarray(age, dtype=float) + params.drift_t0) / params.drift_t0) ** (-params.drift_nu)
    return g


def reset(state: DeviceState, params: DeviceParams, rng: RandomStream) -> DeviceState:
    """Re-amorphize: draw a new initial thickness from a positive-truncated normal."""
    u0 = rng.truncated_normal(params.u_a0_mean, params.u_a0_sigma)
    return replace(state, u_a=u0, u_a0=u0, resets_seen=state.resets_seen + 1, age=0.0)


def apply_set(state: DeviceState, pulse: Pulse, params: DeviceParams) -> DeviceState:
    if pulse.kind is not PulseKind.SET:
        raise ValueError(f"apply_set needs a SET pulse, got {pulse.kind.value}")
    if not (math.isfinite(pulse.amplitude) and math.isfinite(pulse.duration)):
        raise ValueError("pulse amplitude/duration must be finite")
    u = np.array([state.u_a], dtype=np.float64)
    integrate_set(params, u, np.zeros(1, dtype=np.int64), pulse.amplitude, pulse.duration)
    return replace(state, u_a=float(u[0]), pulses_seen=state.pulses_seen + 1, age=0.0)


def advance(state: DeviceState, dt: float) -> DeviceState:
    """Let ``dt`` ns of idle time pass (only matters for drift)."""
    return replace(state, age=state.age + dt)


def read_conductance(state: DeviceState, params: DeviceParams, rng: RandomStream | None = None) -> float:
    """One conductance read in uS.

    Multiplicative Gaussian read noise consumes one draw from ``rng``; with
    ``read_noise_rel == 0`` no draw is taken.
    """
    g = float(conductance(params, state.u_a, state.u_a0, state.age))
    if params.read_noise_rel > 0:
        if rng is None:
            raise ValueError("a RandomStream is required when read noise is enabled")
        g *= 1.0 + params.read_noise_rel * rng.normal()
    return max(g, 0.0)
