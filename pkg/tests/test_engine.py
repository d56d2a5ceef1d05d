import dataclasses
import math

import numpy as np
import pytest

from compmem.array import ArrayConfig, MemoryArray
from compmem.baselines import weights_streaming
from compmem.device import DeviceParams
from compmem.engine import (EngineConfig, classification_metrics, classify, momentum, resolve_config,
                            run, schedule_pulse)
from compmem.processes import EnsembleConfig, MatrixEnsemble, ProcessEnsemble


def same_ranking(values, reference, rtol=1e-9):
    """True when ``values`` orders items exactly as ``reference`` does,
    treating reference ties as ties (equal up to ``rtol``)."""
    order = np.argsort(reference, kind="stable")
    v, r = np.asarray(values)[order], np.asarray(reference)[order]
    for a, b, ra, rb in zip(v, v[1:], r, r[1:]):
        if rb == ra:
            if abs(b - a) > rtol * max(abs(a), abs(b)):
                return False
        elif not b > a:
            return False
    return True


def simulate(ens_cfg, engine_cfg, params, seed=0, workers=1):
    ens = ProcessEnsemble(ens_cfg)
    arr = MemoryArray(ArrayConfig(ens_cfg.n * engine_cfg.replicas, params, seed), workers=workers)
    return run(ens, arr, engine_cfg), ens, arr


def test_momentum_counts():
    assert momentum(np.zeros(10)) == 0
    assert momentum(np.ones(7, dtype=np.uint8)) == 7


def test_momentum_of_million_processes():
    ens = ProcessEnsemble(EnsembleConfig(1_000_000, 0, 0.01, 0.0, seed=1, k_steps=1000))
    m = np.array([momentum(x) for x in ens])
    assert abs(m.mean() - 10_000) < 3 * math.sqrt(1e6 * 0.01 * 0.99)


def test_pulse_schedule_floor_and_ceiling():
    cfg = EngineConfig()
    assert schedule_pulse(0, cfg) is None
    assert schedule_pulse(10_000, cfg) is None  # 20 uA is below the 25 uA floor
    p = schedule_pulse(41_000, cfg)
    assert p.amplitude == 80.0 and p.duration == 50.0
    assert schedule_pulse(12_500, cfg).amplitude == pytest.approx(25.0)
    d = EngineConfig(modulation="duration", duration_scale=0.5, duration_min=2.0, duration_max=10.0)
    assert schedule_pulse(3, d) is None
    assert schedule_pulse(8, d).duration == 4.0
    assert schedule_pulse(100, d).duration == 10.0
    assert schedule_pulse(8, d).amplitude == d.set_amplitude


def test_auto_scale_maps_expected_momentum_to_fraction_of_floor():
    cfg = resolve_config(EngineConfig(auto_scale=True, i_min=25.0), 1000.0)
    assert cfg.current_scale * 1000.0 == pytest.approx(0.8 * 25.0)
    assert resolve_config(EngineConfig(), 1000.0) == EngineConfig()
    with pytest.raises(ValueError):
        resolve_config(EngineConfig(auto_scale=True), 0.0)


def test_threshold_rule():
    np.testing.assert_array_equal(classify([1.0, 2.0, 3.5], 2.0), [False, True, True])
    assert not classify([0.1, 1.9], 2.0).any()


def test_classification_metrics():
    m = classification_metrics([1, 1, 0, 0], [1, 0, 1, 0])
    assert (m["tp"], m["fp"], m["fn"], m["tn"]) == (1, 1, 1, 1)
    assert m["f1"] == 0.5 and m["accuracy"] == 0.5


def test_perfect_separation_when_fully_correlated(linear):
    ens_cfg = EnsembleConfig(16, 8, 0.3, 1.0, seed=3, k_steps=200)
    cfg = EngineConfig(modulation="duration", duration_scale=0.05, readout_period=50)
    res, ens, _ = simulate(ens_cfg, cfg, linear)
    g = res.mean_conductance
    assert g[:8].min() > g[8:].max()
    w = weights_streaming(ens).w
    assert w[:8].min() > w[8:].max()


def test_no_correlated_group_gives_empty_prediction(params):
    ens_cfg = EnsembleConfig(500, 0, 0.01, 0.1, seed=4, k_steps=300)
    res, _, _ = simulate(ens_cfg, EngineConfig(auto_scale=True, readout_period=100), params)
    assert not res.predicted.any()
    assert res.metrics["tp"] == 0 and res.metrics["fp"] == 0


def test_replica_mean(params):
    ens_cfg = EnsembleConfig(50, 10, 0.05, 0.5, seed=5, k_steps=200)
    res, _, _ = simulate(ens_cfg, EngineConfig(auto_scale=True, replicas=4, readout_period=200), params)
    np.testing.assert_allclose(res.mean_conductance, res.snapshots[-1].reshape(50, 4).mean(axis=1))


def test_snapshot_schedule(params):
    ens_cfg = EnsembleConfig(20, 5, 0.1, 0.3, seed=1, k_steps=250)
    res, _, _ = simulate(ens_cfg, EngineConfig(auto_scale=True, readout_period=100), params)
    assert res.snapshot_steps == [100, 200, 250]
    assert len(res.momentum) == 250


def test_linear_accumulation_matches_weights(linear):
    ens_cfg = EnsembleConfig(64, 16, 0.05, 0.3, seed=7, k_steps=512)
    cfg = EngineConfig(modulation="duration", duration_scale=2.0, readout_period=512)
    res, ens, arr = simulate(ens_cfg, cfg, linear)
    du = arr.u_a0 - arr.u_a
    w = weights_streaming(ens).w
    assert arr.u_a.min() > 0
    ratio = du[w > 0] / w[w > 0]
    assert np.ptp(ratio) / ratio.mean() < 1e-6
    assert ratio.mean() == pytest.approx(0.05 * 2.0 * 512, rel=1e-6)
    assert same_ranking(du, w)


def test_separation_grows_with_correlation(params):
    gaps = []
    for c in (0.05, 0.1, 0.2):
        ens_cfg = EnsembleConfig(2000, 200, 0.01, c, seed=11, k_steps=2000)
        res, ens, _ = simulate(ens_cfg, EngineConfig(auto_scale=True, readout_period=2000), params)
        g = res.mean_conductance
        gaps.append(g[ens.labels].mean() - g[~ens.labels].mean())
    assert gaps[0] < gaps[1] < gaps[2]


def test_raising_floor_never_increases_conductance(quiet):
    ens_cfg = EnsembleConfig(300, 60, 0.05, 0.2, seed=2, k_steps=400)
    scale = 70.0 / (300 * 0.05 * 2)
    finals = []
    for i_min in (20.0, 40.0, 55.0, 70.0):
        cfg = EngineConfig(current_scale=scale, i_min=i_min, readout_period=400)
        finals.append(simulate(ens_cfg, cfg, quiet)[0].mean_conductance)
    for lo, hi in zip(finals[1:], finals[:-1]):
        assert np.all(lo <= hi)


def test_run_is_deterministic_across_workers(params):
    ens_cfg = EnsembleConfig(400, 40, 0.02, 0.2, seed=9, k_steps=300)
    cfg = EngineConfig(auto_scale=True, replicas=2, readout_period=100)
    a = simulate(ens_cfg, cfg, params, seed=1)[0]
    b = simulate(ens_cfg, cfg, params, seed=1, workers=4)[0]
    for x, y in zip(a.snapshots, b.snapshots):
        np.testing.assert_array_equal(x, y)
    assert a.metrics == b.metrics and a.pulses_applied == b.pulses_applied


def test_kmeans_classifier(params):
    ens_cfg = EnsembleConfig(300, 60, 0.05, 0.3, seed=3, k_steps=600)
    res, ens, _ = simulate(ens_cfg, EngineConfig(auto_scale=True, classifier="kmeans",
                                                 readout_period=600), params)
    assert res.metrics["f1"] > 0.95
    assert res.mean_conductance[res.predicted].min() >= res.threshold


def test_run_preconditions(params):
    ens = ProcessEnsemble(EnsembleConfig(10, 2, 0.1, 0.1, k_steps=5))
    with pytest.raises(ValueError):
        run(ens, MemoryArray(ArrayConfig(11, params)), EngineConfig())
    ens.step()
    with pytest.raises(ValueError):
        run(ens, MemoryArray(ArrayConfig(10, params)), EngineConfig())
    with pytest.raises(ValueError):
        run(MatrixEnsemble(np.ones((3, 2))), MemoryArray(ArrayConfig(2, params)),
            EngineConfig(i_min=90.0))


def test_config_violations_and_roundtrip():
    errs = EngineConfig(i_min=90.0, i_max=80.0).violations()
    assert len(errs) == 1 and "engine.i_min" in errs[0][0] and "engine.i_max" in errs[0][0]
    assert {k for k, _ in EngineConfig(i_min=0.0, replicas=0, pulse_duration=0.0).violations()} == \
        {"engine.i_min", "engine.replicas", "engine.pulse_duration"}
    cfg = EngineConfig(duration_max=12.0, auto_scale=True)
    assert EngineConfig.from_dict(cfg.to_dict()) == cfg
    assert EngineConfig.from_dict(EngineConfig().to_dict()) == EngineConfig()
    with pytest.raises(KeyError):
        EngineConfig.from_dict({"bogus": 1})


def test_drift_step_time_lowers_readout():
    p = DeviceParams(drift_nu=0.05, read_noise_rel=0.0, u_a0_sigma=0.0)
    ens_cfg = EnsembleConfig(50, 25, 0.1, 1.0, seed=1, k_steps=100)
    base = EngineConfig(auto_scale=True, readout_period=100)
    fresh = simulate(ens_cfg, base, p)[0].mean_conductance
    aged = simulate(ens_cfg, dataclasses.replace(base, step_time=1e5), p)[0].mean_conductance
    assert np.all(aged <= fresh) and np.any(aged < fresh)
