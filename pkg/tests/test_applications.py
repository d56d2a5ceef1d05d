import numpy as np
import pytest

from compmem.applications import (CalibrationError, FactorProbeConfig, is_factor, matvec_estimate,
                                  relative_l2_error)
from compmem.array import ArrayConfig, MemoryArray


def probe(x, y, params):
    arr = MemoryArray(ArrayConfig(1, params, 0))
    return is_factor(FactorProbeConfig.calibrated(x, y, params), arr)


@pytest.mark.parametrize("y", [1, 2, 7, 30])
def test_one_divides_everything(quiet, y):
    assert probe(1, y, quiet)


@pytest.mark.parametrize("x, y, expected", [(3, 9, True), (3, 10, False), (5, 3, False), (12, 144, True),
                                            (7, 48, False)])
def test_factor_examples(quiet, x, y, expected):
    assert probe(x, y, quiet) is expected


def test_factor_exhaustive_small(quiet):
    arr = MemoryArray(ArrayConfig(1, quiet, 0))
    for x in range(1, 7):
        cfg = FactorProbeConfig.calibrated(x, 1, quiet)
        for y in range(1, 37):
            assert is_factor(FactorProbeConfig(x, y, cfg.threshold, cfg.pulse), arr) == (y % x == 0)


def test_factor_calibration_errors(quiet):
    with pytest.raises(CalibrationError):
        FactorProbeConfig.calibrated(3, 9, quiet, threshold=30.0)
    with pytest.raises(CalibrationError):
        FactorProbeConfig.calibrated(3, 9, quiet, amplitude=20.0)
    with pytest.raises(ValueError):
        FactorProbeConfig(0, 3, 1.0, FactorProbeConfig.calibrated(2, 2, quiet).pulse)


def run_matvec(A, x, params, seed=0, **kw):
    arr = MemoryArray(ArrayConfig(len(x), params, seed))
    return matvec_estimate(A, x, arr, **kw)


def test_matvec_identity_is_proportional(quiet):
    x = np.array([0.2, 1.0, 0.0, 0.7, 0.45])
    np.testing.assert_allclose(run_matvec(np.eye(5), x, quiet), x, rtol=1e-3, atol=1e-6)


def test_matvec_zero_matrix(quiet):
    np.testing.assert_array_equal(run_matvec(np.zeros((4, 4)), np.ones(4), quiet), np.zeros(4))


def test_matvec_random_noise_free(quiet):
    rng = np.random.default_rng(1)
    A, x = rng.random((32, 32)), rng.random(32)
    assert relative_l2_error(run_matvec(A, x, quiet), A @ x) <= 1e-3
    assert relative_l2_error(run_matvec(A, x, quiet, calibrate=False), A @ x) <= 1e-3


def test_matvec_random_default_noise(params):
    rng = np.random.default_rng(2)
    A, x = rng.random((32, 32)), rng.random(32)
    assert relative_l2_error(run_matvec(A, x, params, seed=3), A @ x) <= 0.05


def test_matvec_is_linear_in_x(quiet):
    rng = np.random.default_rng(4)
    A, x = rng.random((16, 16)), rng.random(16)
    base = run_matvec(A, x, quiet)
    for alpha in (0.25, 3.0):
        np.testing.assert_allclose(run_matvec(A, alpha * x, quiet), alpha * base, rtol=1e-6)


def test_matvec_input_validation(quiet):
    with pytest.raises(ValueError):
        run_matvec(-np.eye(3), np.ones(3), quiet)
    with pytest.raises(ValueError):
        run_matvec(np.eye(3), np.ones(2), quiet)
    with pytest.raises(ValueError):
        run_matvec(np.eye(3), np.ones(3), quiet, scale=1e6)
    with pytest.raises(ValueError):
        matvec_estimate(np.eye(3), np.ones(3), MemoryArray(ArrayConfig(2, quiet)))


def test_relative_l2_error():
    assert relative_l2_error([1.0, 1.0], [1.0, 1.0]) == 0.0
    assert relative_l2_error([0.0, 1.0], [0.0, 2.0]) == pytest.approx(0.5)
    assert relative_l2_error([1.0], [0.0]) == 1.0
