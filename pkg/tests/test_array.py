import numpy as np
import pytest

from compmem.array import ArrayConfig, MemoryArray, write_conductance_csv
from compmem.device import RESET_PULSE, DeviceParams, DeviceState, Pulse, apply_set, read_conductance, reset
from compmem.rng import RandomStream


def make(n, params=None, seed=0, workers=1):
    return MemoryArray(ArrayConfig(n, params or DeviceParams(), seed), workers=workers)


def test_single_device_array_matches_scalar_model(params):
    arr = make(1, params, seed=5).reset_all()
    st = reset(DeviceState.fresh(params), params, RandomStream(seed=5, stream_id=0))
    assert arr.u_a[0] == st.u_a
    arr.pulse_subset([0], Pulse.set(70.0, 50.0))
    st = apply_set(st, Pulse.set(70.0, 50.0), params)
    assert arr.u_a[0] == st.u_a
    s = arr.stream(0)
    assert arr.read_all()[0] == read_conductance(st, params, s)


def test_equal_seeds_equal_state():
    a, b = make(1000, seed=3).reset_all(), make(1000, seed=3).reset_all()
    np.testing.assert_array_equal(a.u_a, b.u_a)
    assert not np.array_equal(a.u_a, make(1000, seed=4).reset_all().u_a)


def test_reset_spread_million_devices():
    arr = make(1_000_000, seed=1).reset_all()
    assert abs(arr.u_a.std() - 3.0) < 0.05
    assert abs(arr.u_a.mean() - 60.0) < 0.01


def test_empty_selection_is_noop():
    arr = make(50, seed=2).reset_all()
    before = arr.copy()
    arr.pulse_subset([], Pulse.set(80.0))
    arr.pulse_subset(np.array([], dtype=int), Pulse.set(80.0))
    np.testing.assert_array_equal(arr.u_a, before.u_a)
    np.testing.assert_array_equal(arr.pulses_seen, before.pulses_seen)


def test_selection_order_irrelevant():
    base = make(200, seed=9).reset_all()
    sel = np.random.default_rng(0).choice(200, 80, replace=False)
    a, b, c = base.copy(), base.copy(), base.copy()
    a.pulse_subset(sel, Pulse.set(75.0))
    b.pulse_subset(sel[::-1], Pulse.set(75.0))
    c.pulse_subset(set(sel.tolist()), Pulse.set(75.0))
    np.testing.assert_array_equal(a.u_a, b.u_a)
    np.testing.assert_array_equal(a.u_a, c.u_a)


def test_bulk_pulse_equals_sequential_oracle(params):
    arr = make(64, params, seed=7).reset_all()
    states = [arr.device_state(i) for i in range(64)]
    pulse = Pulse.set(90.0, 35.0)
    for _ in range(3):
        arr.pulse_subset(np.arange(64), pulse)
        states = [apply_set(s, pulse, params) for s in states]
    np.testing.assert_array_equal(arr.u_a, [s.u_a for s in states])


@pytest.mark.parametrize("workers", [2, 3, 8])
def test_batching_and_workers_bit_identical(workers):
    ref = make(5000, seed=11).reset_all()
    par = make(5000, seed=11, workers=workers).reset_all()
    rng = np.random.default_rng(1)
    for amp in (60.0, 80.0, 95.0):
        sel = rng.choice(5000, 3000, replace=False)
        ref.pulse_subset(sel, Pulse.set(amp))
        # split the same selection into shuffled batches
        for chunk in np.array_split(rng.permutation(sel), 5)[::-1]:
            par.pulse_subset(chunk, Pulse.set(amp))
    np.testing.assert_array_equal(ref.u_a, par.u_a)
    np.testing.assert_array_equal(ref.read_all(), par.read_all())


def test_reads_noise_free_and_noisy(quiet, params):
    q = make(100, quiet).reset_all()
    q.pulse_subset(np.arange(50), Pulse.set(80.0))
    np.testing.assert_array_equal(q.read_all(), q.read_all())

    arr = make(20, params, seed=3).reset_all()
    arr.pulse_subset(None, Pulse.set(80.0, 300.0))
    truth = arr.conductance()
    r1, r2 = arr.read_all(), arr.read_all()
    assert not np.array_equal(r1, r2)
    mean = np.mean([arr.read_all() for _ in range(10_000)], axis=0)
    np.testing.assert_allclose(mean, truth, rtol=0.005)


def test_fresh_noise_free_array_reads_g_min(quiet):
    arr = make(30, quiet).reset_all()
    np.testing.assert_allclose(arr.read_all(), quiet.g_min)


def test_invalid_ids_rejected_before_mutation():
    arr = make(10, seed=1).reset_all()
    before = arr.u_a.copy()
    with pytest.raises(IndexError):
        arr.pulse_subset([1, 2, 10], Pulse.set(80.0))
    with pytest.raises(IndexError):
        arr.pulse_subset([-1], Pulse.set(80.0))
    with pytest.raises(TypeError):
        arr.pulse_subset([0.5], Pulse.set(80.0))
    with pytest.raises(ValueError):
        arr.pulse_subset([0], RESET_PULSE)
    np.testing.assert_array_equal(arr.u_a, before)


def test_boolean_mask_selection():
    a = make(6, seed=2).reset_all()
    b = a.copy()
    mask = np.array([1, 0, 1, 0, 0, 1], dtype=bool)
    a.pulse_subset(mask, Pulse.set(80.0))
    b.pulse_subset([0, 2, 5], Pulse.set(80.0))
    np.testing.assert_array_equal(a.u_a, b.u_a)


def test_array_config_validation():
    with pytest.raises(ValueError):
        ArrayConfig(0)
    with pytest.raises(ValueError):
        ArrayConfig(1, master_seed=-1)


def test_conductance_csv(tmp_path):
    path = write_conductance_csv(tmp_path / "g.csv", np.array([0.1, 2.5]))
    lines = path.read_text().splitlines()
    assert lines[0] == "device_id,conductance_uS"
    assert lines[1].startswith("0,0.1") and len(lines) == 3
