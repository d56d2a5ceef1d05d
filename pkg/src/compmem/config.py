"""TOML configuration files: device parameters and experiment recipes."""

from __future__ import annotations

import copy
import json
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .device import DeviceParams
from .engine import EngineConfig
from .processes import EnsembleConfig

__all__ = [
    "ConfigError",
    "RECIPE_KINDS",
    "load_toml",
    "load_device_params",
    "load_recipe",
    "apply_overrides",
    "device_params_from",
    "recipe_violations",
    "validate_config",
    "default_config_dir",
]

RECIPE_KINDS = ("synthetic-correlation", "weather-correlation", "accumulation-curve", "factor", "matvec")


class ConfigError(Exception):
    """Unreadable or invalid configuration (CLI exit status 2)."""


def default_config_dir() -> Path:
    return Path(__file__).parent / "configs"


def load_toml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    if path.suffix == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_device_params(path) -> DeviceParams:
    """Load and validate a device parameter file; the first violation is reported."""
    data = load_toml(path)
    try:
        params = DeviceParams.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    errs = params.violations()
    if errs:
        key, msg = errs[0]
        raise ConfigError(f"{path}: {key}: {msg}")
    return params


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict, assignments) -> dict:
    """Apply ``key.path=value`` strings (values parsed as TOML, else strings)."""
    out = copy.deepcopy(data)
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"--set has an empty key: {item!r}")
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"--set {key}: {p!r} is not a table")
            node = nxt
        node[parts[-1]] = _parse_value(raw.strip())
    return out


def load_recipe(path) -> dict:
    """Read a recipe (TOML) or a run manifest (JSON, replayed from its recipe).

    A relative ``device_file`` is resolved against the recipe's directory.
    """
    path = Path(path)
    data = load_toml(path)
    if "recipe" in data and isinstance(data["recipe"], dict):
        data = data["recipe"]
    data = copy.deepcopy(data)
    for key in ("device_file", "image", "weather_csv", "matrix_csv", "vector_csv"):
        for section in (data, data.get("ensemble", {}), data.get("weather", {}), data.get("matvec", {})):
            val = section.get(key)
            if isinstance(val, str) and not Path(val).is_absolute():
                candidate = path.parent / val
                if candidate.exists() or not Path(val).exists():
                    section[key] = str(candidate)
    return data


def device_params_from(recipe: dict) -> DeviceParams:
    """Device parameters: named preset, then ``device_file``, then ``[device]`` overrides."""
    preset = recipe.get("device_preset", "default")
    if preset == "default":
        base = DeviceParams().to_dict()
    elif preset == "constant-growth":
        base = DeviceParams.constant_growth().to_dict()
    else:
        raise ConfigError(f"device_preset: unknown preset {preset!r}")
    if recipe.get("device_file"):
        base.update(load_toml(recipe["device_file"]))
    base.update(recipe.get("device", {}))
    if recipe.get("noise_free"):
        base.update(u_a0_sigma=0.0, read_noise_rel=0.0, drift_nu=0.0)
    try:
        return DeviceParams.from_dict(base)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"device: {exc}") from exc


def _section_violations(section: dict, cls, prefix: str, fill=None) -> list[tuple[str, str]]:
    data = dict(fill or {})
    data.update(section)
    try:
        if cls is EngineConfig:
            obj = EngineConfig.from_dict(data)
        else:
            known = {f for f in cls.__dataclass_fields__}
            unknown = set(data) - known
            if unknown:
                return [(f"{prefix}.{sorted(unknown)[0]}", "unknown key")]
            obj = cls(**data)
    except (KeyError, TypeError, ValueError) as exc:
        return [(prefix, str(exc))]
    return obj.violations(prefix)


def recipe_violations(recipe: dict) -> list[tuple[str, str]]:
    out = []
    kind = recipe.get("kind")
    if kind not in RECIPE_KINDS:
        return [("kind", f"must be one of {', '.join(RECIPE_KINDS)}; got {kind!r}")]
    seed = recipe.get("seed", 0)
    if not (isinstance(seed, int) and 0 <= seed < 2**64):
        out.append(("seed", "must be an unsigned 64-bit integer"))
    try:
        out += device_params_from(recipe).violations()
    except ConfigError as exc:
        out.append(("device", str(exc)))
    if "engine" in recipe or kind in ("synthetic-correlation", "weather-correlation"):
        out += _section_violations(recipe.get("engine", {}), EngineConfig, "engine")
    if kind == "synthetic-correlation":
        ens = {k: v for k, v in recipe.get("ensemble", {}).items() if k not in ("image", "grid")}
        ens.setdefault("seed", seed if isinstance(seed, int) else 0)
        out += _section_violations(ens, EnsembleConfig, "ensemble")
        img = recipe.get("ensemble", {}).get("image")
        if img and not Path(img).exists():
            out.append(("ensemble.image", f"file not found: {img}"))
    if kind == "weather-correlation":
        w = recipe.get("weather", {})
        if not w.get("weather_csv") and "synthetic" not in w:
            out.append(("weather", "needs weather_csv or a [weather.synthetic] table"))
        if w.get("weather_csv") and not Path(w["weather_csv"]).exists():
            out.append(("weather.weather_csv", f"file not found: {w['weather_csv']}"))
        band = w.get("band", [0.0, 1.0])
        if not (len(band) == 2 and 0 <= band[0] <= band[1] <= 1):
            out.append(("weather.band", f"must satisfy 0 <= lo <= hi <= 1, got {band}"))
        if "synthetic" in w:
            syn = dict(w["synthetic"])
            syn.setdefault("seed", seed if isinstance(seed, int) else 0)
            out += _section_violations(syn, EnsembleConfig, "weather.synthetic")
    if kind == "accumulation-curve":
        acc = recipe.get("accumulation", {})
        if not acc.get("n_devices", 1) >= 1:
            out.append(("accumulation.n_devices", "must be >= 1"))
        if not acc.get("n_pulses", 1) >= 1:
            out.append(("accumulation.n_pulses", "must be >= 1"))
        if any(c < 0 for c in acc.get("currents", [])):
            out.append(("accumulation.currents", "must be >= 0"))
    if kind == "factor":
        fac = recipe.get("factor", {})
        if not (fac.get("x_max", 1) >= 1 and fac.get("y_max", 1) >= 1):
            out.append(("factor.x_max, factor.y_max", "must be >= 1"))
    if kind == "matvec":
        mv = recipe.get("matvec", {})
        for key in ("matrix_csv", "vector_csv"):
            if mv.get(key) and not Path(mv[key]).exists():
                out.append((f"matvec.{key}", f"file not found: {mv[key]}"))
        if not mv.get("matrix_csv") and not mv.get("n", 0) >= 1:
            out.append(("matvec.n", "needs matrix_csv/vector_csv or a size n >= 1"))
    return out


@dataclass(frozen=True)
class Violation:
    path: str
    key: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.key}: {self.message}"


def validate_config(paths) -> list[Violation]:
    """Check device files and recipes; an empty list means everything is valid."""
    report = []
    for path in paths:
        path = str(path)
        try:
            data = load_recipe(path)
        except ConfigError as exc:
            report.append(Violation(path, "file", str(exc)))
            continue
        if "kind" in data:
            errs = recipe_violations(data)
        else:
            try:
                errs = DeviceParams.from_dict(data).violations()
            except (KeyError, TypeError, ValueError) as exc:
                errs = [("device", str(exc))]
        report += [Violation(path, k, m) for k, m in errs]
    return report
