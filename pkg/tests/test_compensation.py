import numpy as np
import pytest

from hybridqkd.compensation import (
    CompensationConfig,
    choose_slice,
    duty_cycle,
    phase_demo,
    run_closed_loop,
)
from hybridqkd.drift import DriftConfig
from hybridqkd.estimation import CountNoise

TWO_PI = 2 * np.pi


def test_duty_cycle_default():
    assert duty_cycle(CompensationConfig()) == pytest.approx(10 / 10.1002, rel=1e-9)
    assert duty_cycle(CompensationConfig()) >= 0.98


def test_choose_slice_cancels_offset():
    rng = np.random.default_rng(0)
    cfg = CompensationConfig(noise=CountNoise(gain_error=0.0, poisson=False))
    for k_true in (1, 4, 9, 16):
        offset = -TWO_PI * k_true / 16
        assert choose_slice(offset, cfg, rng) == k_true


def test_zero_noise_zero_std():
    cfg = CompensationConfig(noise=CountNoise(gain_error=0.0, poisson=False))
    res = run_closed_loop(DriftConfig.quiet(), 60.0, cfg, np.random.default_rng(1), initial_arm=0.0)
    assert res.std_deg == 0.0
    assert np.all(res.phase_error < 1e-12)


def test_closed_loop_std_bound():
    res = run_closed_loop(DriftConfig.for_distance(300.0), 60.0, rng=np.random.default_rng(2))
    assert res.std_deg <= 8.0
    assert len(res.calibration_times) == 7


def test_quantization_bound_holds():
    # right after every calibration the residual is at most half a slice plus shot noise
    res = run_closed_loop(DriftConfig(), 120.0, rng=np.random.default_rng(3))
    idx = np.searchsorted(res.t, res.calibration_times - 1e-12)
    assert np.all(res.phase_error[idx] <= np.pi / 16 + 0.05)


def test_uncompensated_drifts_away():
    peaks_on, peaks_off = [], []
    for seed in range(8):
        d = phase_demo(300.0, 1800.0, seed)
        peaks_on.append(np.max(d["error_compensated"]))
        peaks_off.append(np.max(d["error_uncompensated"]))
    assert np.median(peaks_off) > 2 * np.median(peaks_on)
    assert max(peaks_on) < np.radians(25)


def test_phase_demo_shares_arm_path():
    d = phase_demo(300.0, 30.0, 5)
    assert d["t"].shape == d["error_compensated"].shape == d["error_uncompensated"].shape
    assert d["duty_cycle"] == pytest.approx(duty_cycle(CompensationConfig()))
    again = phase_demo(300.0, 30.0, 5)
    assert np.array_equal(d["error_compensated"], again["error_compensated"])


def test_config_validation():
    with pytest.raises(ValueError):
        CompensationConfig(period=0.0)
    with pytest.raises(ValueError):
        run_closed_loop(DriftConfig(), 0.0)
