"""Batch experiment recipes and their artifacts."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from pathlib import Path

import numpy as np

from . import __version__
from .applications import FactorProbeConfig, is_factor, matvec_estimate, relative_l2_error
from .array import ArrayConfig, MemoryArray, write_conductance_csv
from .baselines import (COVARIANCE_CAP, covariance_matrix, expected_weights, kmeans_1d,
                        weights_streaming, write_matrix_csv, write_weights_csv)
from .config import ConfigError, device_params_from, recipe_violations
from .device import RESET_PULSE, Pulse
from .engine import EngineConfig, run
from .processes import EnsembleConfig, ProcessEnsemble, subset_from_image
from .rasters import disc_raster, read_pbm, write_pbm, write_pgm
from .rng import derive_key, uniforms
from .weather import binarize_weather, select_stations, write_weather_csv

log = logging.getLogger(__name__)

__all__ = ["RecipeFailure", "accumulation_curve", "run_recipe"]


class RecipeFailure(Exception):
    """A run finished but violated an invariant or a configured check (exit 1)."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _write_json(path: Path, data: dict) -> Path:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def _write_labels(path: Path, labels) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["process_id", "label"])
        for i, v in enumerate(np.asarray(labels, dtype=int)):
            w.writerow([i, int(v)])
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Run:
    """Shared state of one recipe execution."""

    def __init__(self, recipe: dict, out_dir: Path, workers: int):
        self.recipe = recipe
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.workers = workers
        self.seed = int(recipe.get("seed", 0))
        self.params = device_params_from(recipe)
        self.failures: list[str] = []
        self.resolved: dict = {}

    def check(self, ok: bool, message: str) -> None:
        if not ok:
            self.failures.append(message)

    def engine_config(self, **defaults) -> EngineConfig:
        data = dict(defaults)
        data.update(self.recipe.get("engine", {}))
        return EngineConfig.from_dict(data)

    def write_snapshots(self, result, grid=None, n_processes=None, display=(0.0, 5.0)) -> None:
        snap_dir = self.out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        d = result.config.replicas
        for idx, (g, step) in enumerate(zip(result.snapshots, result.snapshot_steps)):
            write_conductance_csv(snap_dir / f"snapshot_{idx:04d}_k{step:07d}.csv", g)
            if grid is not None:
                means = g.reshape(n_processes, d).mean(axis=1)
                write_pgm(snap_dir / f"snapshot_{idx:04d}_k{step:07d}.pgm",
                          means.reshape(grid), display[0], display[1])


# ------------------------------------------------------------ recipes

def _synthetic(ctx: _Run) -> dict:
    ens_cfg = dict(ctx.recipe.get("ensemble", {}))
    image = ens_cfg.pop("image", None)
    grid = ens_cfg.pop("grid", None)
    ens_cfg.setdefault("seed", ctx.seed)
    labels = None
    if image:
        raster = read_pbm(image)
        labels, n_c = subset_from_image(raster, ens_cfg.get("n"))
        ens_cfg["n"], ens_cfg["n_correlated"] = labels.size, n_c
        grid = list(raster.shape)
    elif grid:
        raster = disc_raster(grid[0], grid[1], ens_cfg["n_correlated"])
        labels, _ = subset_from_image(raster, ens_cfg.get("n"))
        write_pbm(ctx.out / "labels_image.pbm", raster)
    config = EnsembleConfig(**ens_cfg)
    ensemble = ProcessEnsemble(config, labels)
    cfg = ctx.engine_config()
    array = MemoryArray(ArrayConfig(config.n * cfg.replicas, ctx.params, ctx.seed), workers=ctx.workers)
    result = run(ensemble, array, cfg)
    ctx.resolved["engine"] = result.config.to_dict()
    ctx.resolved["ensemble"] = dataclasses.asdict(config)

    expected_snaps = math.ceil(config.k_steps / cfg.readout_period)
    ctx.check(len(result.snapshots) == expected_snaps,
              f"snapshot count {len(result.snapshots)} != ceil(K/period) = {expected_snaps}")
    out = ctx.recipe.get("output", {})
    ctx.write_snapshots(result, tuple(grid) if grid else None, config.n,
                        tuple(out.get("display", (0.0, 5.0))))
    _write_labels(ctx.out / "predicted_labels.csv", result.predicted)
    _write_labels(ctx.out / "truth_labels.csv", ensemble.labels)

    truth = ensemble.labels
    m = result.mean_conductance
    metrics = {
        "classification": result.metrics,
        "threshold_uS": result.threshold,
        "current_scale": result.config.current_scale,
        "duration_scale": result.config.duration_scale,
        "pulses_applied": result.pulses_applied,
        "snapshots": len(result.snapshots),
        "mean_conductance_correlated": float(m[truth].mean()) if truth.any() else None,
        "mean_conductance_uncorrelated": float(m[~truth].mean()) if (~truth).any() else None,
        "expected_weights": dict(zip(("correlated", "uncorrelated"),
                                     expected_weights(config.n, config.n_correlated, config.p, config.c))),
    }
    if out.get("weights", False):
        weights = weights_streaming(ensemble)
        write_weights_csv(ctx.out / "weights.csv", weights)
        metrics["weight_mean_correlated"] = float(weights.w[truth].mean()) if truth.any() else None
        metrics["weight_mean_uncorrelated"] = float(weights.w[~truth].mean()) if (~truth).any() else None
    checks = ctx.recipe.get("checks", {})
    if "min_f1" in checks and result.metrics is not None:
        ctx.check(result.metrics["f1"] >= checks["min_f1"],
                  f"F1 {result.metrics['f1']:.4f} below required {checks['min_f1']}")
    return metrics


def _station_positions(n: int, labels: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic pseudo-geography: the correlated group sits in one region."""
    key = derive_key(seed, "geography")
    ids = np.arange(n)
    u1, u2 = uniforms(key, ids, 0), uniforms(key, ids, 1)
    lat = 25.0 + 24.0 * u1
    lon = -124.0 + 57.0 * u2
    lat = np.where(labels, 36.0 + 8.0 * u1, lat)
    lon = np.where(labels, -95.0 + 14.0 * u2, lon)
    return lat, lon


def _weather(ctx: _Run) -> dict:
    w = ctx.recipe.get("weather", {})
    truth_by_station = None
    csv_path = w.get("weather_csv")
    if not csv_path:
        syn = dict(w["synthetic"])
        syn.setdefault("seed", ctx.seed)
        syn_cfg = EnsembleConfig(**syn)
        # scatter the correlated group over station indices
        order = np.argsort(np.arange(syn_cfg.n) * 7919 % syn_cfg.n, kind="stable")
        labels = np.zeros(syn_cfg.n, dtype=bool)
        labels[order[: syn_cfg.n_correlated]] = True
        ensemble = ProcessEnsemble(syn_cfg, labels)
        bits = np.array([x for x in ensemble], dtype=np.uint8)
        ids = [f"ST{i:04d}" for i in range(syn_cfg.n)]
        lat, lon = _station_positions(syn_cfg.n, labels, syn_cfg.seed)
        csv_path = ctx.out / "weather_input.csv"
        write_weather_csv(csv_path, bits, ids, lat, lon)
        truth_by_station = dict(zip(ids, labels))
        ctx.resolved["weather_synthetic"] = dataclasses.asdict(syn_cfg)

    table = binarize_weather(csv_path)
    table = select_stations(table, tuple(w.get("band", (0.0, 1.0))))
    truth = None
    if truth_by_station is not None:
        truth = np.array([truth_by_station[s] for s in table.station_ids], dtype=bool)
    ensemble = table.as_ensemble(truth)

    cfg = ctx.engine_config(replicas=4, auto_scale=True)
    array = MemoryArray(ArrayConfig(table.n_stations * cfg.replicas, ctx.params, ctx.seed),
                        workers=ctx.workers)
    result = run(ensemble, array, cfg)
    ctx.resolved["engine"] = result.config.to_dict()

    weights = weights_streaming(ensemble)
    km = kmeans_1d(weights.w, 2)
    km_labels = km.labels == 1
    agree = result.predicted == km_labels

    ctx.write_snapshots(result)
    write_weights_csv(ctx.out / "weights.csv", weights)
    _write_labels(ctx.out / "predicted_labels.csv", result.predicted)
    _write_labels(ctx.out / "kmeans_labels.csv", km_labels)
    if table.n_stations <= COVARIANCE_CAP:
        write_matrix_csv(ctx.out / "covariance.csv", covariance_matrix(ensemble))
    with (ctx.out / "stations.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["process_id", "station_id", "latitude", "longitude", "rate", "mean_conductance_uS"])
        for i, sid in enumerate(table.station_ids):
            wr.writerow([i, sid, f"{table.latitude[i]:.4f}", f"{table.longitude[i]:.4f}",
                         repr(float(table.rates[i])), repr(float(result.mean_conductance[i]))])

    metrics = {
        "stations": table.n_stations,
        "windows": table.n_windows,
        "ingest": {k: v for k, v in table.report.items() if k != "unparseable_lines"},
        "agreement": int(agree.sum()),
        "agreement_rate": float(agree.mean()),
        "engine_correlated_kmeans_uncorrelated": int((result.predicted & ~km_labels).sum()),
        "engine_uncorrelated_kmeans_correlated": int((~result.predicted & km_labels).sum()),
        "kmeans_centroids": km.centroids,
        "threshold_uS": result.threshold,
        "current_scale": result.config.current_scale,
        "pulses_applied": result.pulses_applied,
        "classification_vs_truth": result.metrics,
    }
    checks = ctx.recipe.get("checks", {})
    if "min_agreement" in checks:
        ctx.check(agree.mean() >= checks["min_agreement"],
                  f"agreement {agree.mean():.4f} below required {checks['min_agreement']}")
    return metrics


def accumulation_curve(params, n_devices: int, currents, n_pulses: int, duration: float,
                       seed: int, workers: int = 1) -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """Mean and std of conductance after 0..n_pulses identical SET pulses, per current."""
    array = MemoryArray(ArrayConfig(n_devices, params, seed), workers=workers)
    everyone = np.arange(n_devices, dtype=np.int64)
    out = {}
    for current in currents:
        array.reset_all()
        reads = [array.read_all()]
        pulse = Pulse.set(current, duration)
        for _ in range(n_pulses):
            array.pulse_subset(everyone, pulse)
            reads.append(array.read_all())
        reads = np.array(reads)
        out[float(current)] = (reads.mean(axis=1), reads.std(axis=1))
    return out


def _accumulation(ctx: _Run) -> dict:
    acc = ctx.recipe.get("accumulation", {})
    n_devices = int(acc.get("n_devices", 1000))
    currents = [float(c) for c in acc.get("currents", [50.0, 60.0, 80.0, 100.0])]
    n_pulses = int(acc.get("n_pulses", 20))
    duration = float(acc.get("pulse_duration", 50.0))
    curves = accumulation_curve(ctx.params, n_devices, currents, n_pulses, duration, ctx.seed, ctx.workers)
    ctx.resolved["accumulation"] = dict(n_devices=n_devices, currents=currents, n_pulses=n_pulses,
                                        pulse_duration=duration,
                                        reset_pulse=dict(amplitude=RESET_PULSE.amplitude,
                                                         duration=RESET_PULSE.duration))
    path = ctx.out / "accumulation_curve.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["pulse_index"]
        for c in currents:
            header += [f"mean_uS_{c:g}uA", f"std_uS_{c:g}uA"]
        w.writerow(header)
        for k in range(n_pulses + 1):
            row = [k]
            for c in currents:
                mean, std = curves[c]
                row += [repr(float(mean[k])), repr(float(std[k]))]
            w.writerow(row)

    monotone = {}
    g_sat = ctx.params.g_max
    for c in currents:
        mean = curves[c][0]
        steps = np.diff(mean)
        unsaturated = mean[1:] < 0.999 * g_sat
        ok = bool(np.all(steps[unsaturated] > 0))
        monotone[f"{c:g}"] = ok
        ctx.check(ok, f"mean conductance at {c:g} uA is not strictly increasing before saturation")
    ordered = [f"{c:g}" for c in sorted(currents)]
    by_current = True
    for k in range(5, n_pulses + 1):
        col = [curves[float(c)][0][k] for c in ordered]
        if not all(b > a for a, b in zip(col, col[1:])):
            by_current = False
    ctx.check(by_current, "mean conductance is not increasing in SET current at some pulse index >= 5")
    return {
        "monotone_in_pulses": monotone,
        "increasing_in_current": by_current,
        "final_mean_uS": {f"{c:g}": float(curves[c][0][-1]) for c in currents},
    }


def _factor(ctx: _Run) -> dict:
    fac = ctx.recipe.get("factor", {})
    x_max, y_max = int(fac.get("x_max", 12)), int(fac.get("y_max", 144))
    amplitude = float(fac.get("amplitude", 80.0))
    threshold = fac.get("threshold")
    array = MemoryArray(ArrayConfig(1, ctx.params, ctx.seed), workers=1)
    mismatches = 0
    rows = []
    for x in range(1, x_max + 1):
        for y in range(1, y_max + 1):
            cfg = FactorProbeConfig.calibrated(x, y, ctx.params, threshold, amplitude)
            got = is_factor(cfg, array)
            divides = y % x == 0
            mismatches += got != divides
            rows.append((x, y, int(got), int(divides)))
    with (ctx.out / "factor_table.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "is_factor", "divides"])
        w.writerows(rows)
    ctx.check(mismatches == 0 or not fac.get("require_exact", True),
              f"{mismatches} factor probe(s) disagree with divisibility")
    return {"probes": len(rows), "mismatches": int(mismatches)}


def _matvec(ctx: _Run) -> dict:
    mv = ctx.recipe.get("matvec", {})
    if mv.get("matrix_csv"):
        A = np.loadtxt(mv["matrix_csv"], delimiter=",", ndmin=2)
        x = np.loadtxt(mv["vector_csv"], delimiter=",", ndmin=1).ravel()
    else:
        n = int(mv["n"])
        key = derive_key(ctx.seed, "matvec-input")
        A = uniforms(key, np.arange(n * n), 0).reshape(n, n)
        x = uniforms(key, np.arange(n), 1)
    array = MemoryArray(ArrayConfig(len(x), ctx.params, ctx.seed), workers=ctx.workers)
    est = matvec_estimate(A, x, array, amplitude=float(mv.get("amplitude", 80.0)),
                          calibrate=bool(mv.get("calibrate", True)), n_reads=int(mv.get("n_reads", 16)))
    np.savetxt(ctx.out / "estimate.csv", est, delimiter=",", fmt="%.17g")
    metrics = {"n": len(x)}
    if mv.get("oracle", True):
        exact = A @ x
        np.savetxt(ctx.out / "exact.csv", exact, delimiter=",", fmt="%.17g")
        err = relative_l2_error(est, exact)
        metrics["relative_l2_error"] = err
        limit = ctx.recipe.get("checks", {}).get("max_relative_error")
        if limit is not None:
            ctx.check(err <= limit, f"relative L2 error {err:.3e} exceeds {limit}")
    return metrics


_RECIPES = {
    "synthetic-correlation": _synthetic,
    "weather-correlation": _weather,
    "accumulation-curve": _accumulation,
    "factor": _factor,
    "matvec": _matvec,
}


def run_recipe(recipe: dict, out_dir, workers: int = 1) -> dict:
    """Execute a recipe, write its artifacts and manifest, return the metrics.

    Raises :class:`ConfigError` for invalid recipes and :class:`RecipeFailure`
    when the run violates an invariant or a ``[checks]`` bound; artifacts are
    written in both cases.
    """
    errs = recipe_violations(recipe)
    if errs:
        raise ConfigError("; ".join(f"{k}: {m}" for k, m in errs))
    ctx = _Run(recipe, out_dir, workers)
    log.info("running %s recipe into %s", recipe["kind"], ctx.out)
    try:
        metrics = _RECIPES[recipe["kind"]](ctx)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{recipe['kind']}: {exc}") from exc
    metrics = {"kind": recipe["kind"], "checks_failed": ctx.failures, **metrics}
    _write_json(ctx.out / "metrics.json", metrics)

    artifacts = {}
    for path in sorted(ctx.out.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            artifacts[str(path.relative_to(ctx.out))] = _sha256(path)
    manifest_recipe = dict(recipe)
    manifest_recipe["device"] = ctx.params.to_dict()
    manifest_recipe.pop("device_file", None)
    manifest_recipe.pop("device_preset", None)
    manifest_recipe.pop("noise_free", None)
    manifest = {
        "tool": "compmem",
        "version": __version__,
        "kind": recipe["kind"],
        "seed": ctx.seed,
        "recipe": manifest_recipe,
        "resolved": ctx.resolved,
        "artifacts": artifacts,
    }
    _write_json(ctx.out / "manifest.json", manifest)
    if ctx.failures:
        raise RecipeFailure("; ".join(ctx.failures))
    return metrics
