import numpy as np
import pytest

from hybridqkd.drift import (
    DEFAULT_ARM_DRIFT_STD,
    DriftConfig,
    InterferometerState,
    channel_drift_std_for_distance,
    channel_drift_std_from_max_rate,
    drift_trace,
    residual_error,
    step_arm_phase,
    step_channel_phase,
    wiener_paths,
    wrap_phase,
)

SLICE = 2 * np.pi / 16


def test_wrap_and_residual():
    assert wrap_phase(3 * np.pi) == pytest.approx(np.pi)
    assert wrap_phase(-np.pi) == pytest.approx(np.pi)
    assert residual_error(0.1, 2 * np.pi + 0.3) == pytest.approx(0.2)
    assert 0 <= residual_error(5.0, -5.0) <= np.pi


def test_wiener_variance():
    rng = np.random.default_rng(1)
    s, T = 0.7, 4.0
    paths = wiener_paths(s, np.linspace(0.5, T, 8), rng, n_paths=10_000)
    assert np.var(paths[:, -1]) == pytest.approx(s**2 * T, rel=0.05)


def test_wiener_increments_independent_and_additive():
    rng = np.random.default_rng(2)
    paths = wiener_paths(1.0, np.array([1.0, 3.0]), rng, n_paths=20_000)
    d1 = paths[:, 0]
    d2 = paths[:, 1] - paths[:, 0]
    r = np.corrcoef(d1, d2)[0, 1]
    assert abs(r) < 3 / np.sqrt(20_000)
    assert np.var(paths[:, 1]) == pytest.approx(np.var(d1) + np.var(d2), rel=0.05)


def test_calibration_300km_percentile():
    s = channel_drift_std_from_max_rate(6.34)
    rng = np.random.default_rng(3)
    incr = s * rng.standard_normal(2_000_000)
    assert np.percentile(np.abs(incr), 99.9) == pytest.approx(6.34, rel=0.02)
    assert channel_drift_std_for_distance(300.0) == pytest.approx(s)
    assert channel_drift_std_for_distance(400.0) == pytest.approx(channel_drift_std_from_max_rate(14.95))
    assert channel_drift_std_for_distance(350.0) > s


def test_arm_drift_stable_for_ten_seconds():
    rng = np.random.default_rng(4)
    end = wiener_paths(DEFAULT_ARM_DRIFT_STD, np.array([10.0]), rng, n_paths=1000)[:, -1]
    assert np.mean(np.abs(end) < SLICE) >= 0.95


def _horizon(std, rng, q=0.95):
    # time at which the q-quantile of |drift| reaches one slice
    times = np.linspace(0.25, 400, 1600)
    paths = wiener_paths(std, times, rng, n_paths=4000)
    crossed = np.quantile(np.abs(paths), q, axis=0) >= SLICE
    return times[np.argmax(crossed)]


def test_doubled_std_shrinks_horizon_as_square_law():
    rng = np.random.default_rng(5)
    h1 = _horizon(DEFAULT_ARM_DRIFT_STD, rng)
    h2 = _horizon(2 * DEFAULT_ARM_DRIFT_STD, rng)
    # horizon scales as 1/std^2: doubling quarters it (halves it in sqrt time)
    assert h1 / h2 == pytest.approx(4.0, rel=0.15)


def test_step_functions():
    rng = np.random.default_rng(6)
    cfg = DriftConfig.for_distance(300.0)
    st = InterferometerState()
    st = step_channel_phase(st, 1e-3, cfg, rng)
    st = step_arm_phase(st, 1e-3, cfg, rng)
    assert st.time == pytest.approx(1e-3)
    assert st.phase_q - st.phase_ref == pytest.approx(st.arm_difference)
    with pytest.raises(ValueError):
        step_channel_phase(st, 0.0, cfg, rng)
    quiet = step_channel_phase(InterferometerState(), 1.0, DriftConfig.quiet(), rng)
    assert quiet.phi_channel == 0.0 and quiet.opll_noise == 0.0


def test_channel_drift_does_not_enter_residual():
    rng = np.random.default_rng(7)
    cfg = DriftConfig(channel_drift_rate_std=5.0, arm_drift_rate_std=0.0)
    st = InterferometerState()
    for _ in range(50):
        st = step_channel_phase(st, 1e-3, cfg, rng)
    assert residual_error(st.phase_q, st.phase_ref) == pytest.approx(0.0, abs=1e-12)


def test_drift_trace_shapes():
    tr = drift_trace(DriftConfig(), 1.0, 0.01, np.random.default_rng(8))
    assert tr["t"].shape == tr["phase_error"].shape == (100,)
    assert np.all(tr["phase_error"] >= 0)


def test_config_validation():
    with pytest.raises(ValueError):
        DriftConfig(channel_drift_rate_std=-1.0)
