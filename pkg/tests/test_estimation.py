import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridqkd.drift import wrap_phase
from hybridqkd.estimation import (
    CountMatrix,
    CountNoise,
    EstimationError,
    LmsFilterState,
    _convolution_jacobian,
    _phase_gradient,
    calibrate_arms,
    counting_difference,
    expected_counts,
    filter_enhanced_scan,
    filtered_phase,
    identity_weights,
    initialize_filter,
    lms_convolve,
    lms_gradient,
    lms_update,
    phase_to_slice,
    scan_mae_study,
    slice_error,
    sweep_counts,
    train_filter,
    two_phase_scan,
)

TWO_PI = 2 * np.pi


def test_noiseless_recovery_many_offsets():
    rng = np.random.default_rng(0)
    truth = rng.uniform(0, TWO_PI, 1000)
    errs = []
    for z in truth:
        r = two_phase_scan(expected_counts(z, 1000.0))
        errs.append(abs(wrap_phase(r.phase - z)))
        assert abs(r.v_arccos - r.v_arcsin) < 1e-12
    assert max(errs) < 1e-9


@given(st.floats(0, TWO_PI), st.floats(-3.0, 3.0), st.floats(0.2, 5.0))
@settings(max_examples=200, deadline=None)
def test_recovery_any_bias_and_vhalf(z, v_i, v_half):
    m = expected_counts(z, 500.0, v_initial=v_i, v_half=v_half)
    r = two_phase_scan(m, v_initial=v_i, v_half=v_half)
    assert abs(wrap_phase(r.phase - z)) < 1e-9
    assert r.v_arccos == pytest.approx(r.v_arcsin, abs=1e-9 * v_half)


def test_half_window_counts_conserved():
    m = expected_counts(1.1, 300.0)
    assert m.n0 + m.m0 == pytest.approx(300.0)
    assert m.n1 + m.m1 == pytest.approx(300.0)


def test_empty_half_window_raises():
    with pytest.raises(EstimationError):
        two_phase_scan(CountMatrix(0, 5, 0, 5))
    with pytest.raises(ValueError):
        CountMatrix(-1, 0, 0, 0)


def test_phase_to_slice_rules():
    assert phase_to_slice(0.0) == 16
    assert phase_to_slice(TWO_PI / 16) == 1
    assert phase_to_slice(0.5 * TWO_PI / 16) == 1  # half rounds up
    assert phase_to_slice(0.49 * TWO_PI / 16) == 16
    assert phase_to_slice(np.pi) == 8


def test_shot_noise_degrades_gracefully():
    rng = np.random.default_rng(1)
    noise = CountNoise(gain_error=0.0)
    errs = {}
    for total in (10, 1000):
        e = []
        for _ in range(400):
            z = rng.uniform(0, TWO_PI)
            x = noise.sample(expected_counts(z, total).as_vector(), rng)
            try:
                e.append(abs(wrap_phase(filtered_phase(x, None) - z)))
            except EstimationError:
                e.append(np.pi / 2)
        errs[total] = np.mean(e)
    assert errs[1000] < errs[10] < 0.5


def test_convolution_alignment():
    state = LmsFilterState(weights=identity_weights())
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(lms_convolve(x, state), x)
    w = identity_weights()
    w[1] = 0.5
    y = lms_convolve(x, dataclasses.replace(state, weights=w))
    assert np.allclose(y, [1.0, 2.5, 4.0, 5.5])
    assert np.allclose(_convolution_jacobian(x) @ w, y)


def test_phase_gradient_matches_finite_difference():
    y = expected_counts(0.7, 100.0).as_vector() + np.array([1.0, -2.0, 0.5, 1.5])
    g = _phase_gradient(y)
    h = 1e-6
    for k in range(4):
        d = np.zeros(4)
        d[k] = h
        up = two_phase_scan(CountMatrix.from_vector(y + d)).phase
        dn = two_phase_scan(CountMatrix.from_vector(y - d)).phase
        assert g[k] == pytest.approx(wrap_phase(up - dn) / (2 * h), rel=1e-4, abs=1e-8)


def test_lms_gradient_matches_finite_difference():
    rng = np.random.default_rng(2)
    x_r = expected_counts(0.4, 100.0).as_vector() + rng.uniform(-2, 2, 4)
    x_q = expected_counts(1.9, 100.0).as_vector() + rng.uniform(-2, 2, 4)
    w = identity_weights()
    w[1:4] = [0.02, -0.01, 0.005]
    state = LmsFilterState(weights=w)
    e = 0.3

    def loss(weights):
        s = dataclasses.replace(state, weights=weights)
        pr = two_phase_scan(CountMatrix.from_vector(lms_convolve(x_r, s))).slice_position
        pq = two_phase_scan(CountMatrix.from_vector(lms_convolve(x_q, s))).slice_position
        return np.cos(np.pi * (pr - pq) / 16) ** 2

    g = lms_gradient(state, x_r, x_q, e)
    h = 1e-7
    for j in range(4):
        d = np.zeros(10)
        d[j] = h
        fd = -2 * e * (loss(w + d) - loss(w - d)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-3, abs=1e-9)


def test_zero_error_leaves_weights():
    state = LmsFilterState()
    x = expected_counts(0.3, 50.0).as_vector()
    assert slice_error(5, 3, 2, 16) == pytest.approx(0.0, abs=1e-15)
    out = lms_update(state, 5, 3, 2, x, x, reference_slice=16)
    assert np.array_equal(out.weights, state.weights)
    assert out.updates == 1


def test_update_norm_and_leak():
    rng = np.random.default_rng(3)
    state = LmsFilterState(step_size=10.0)
    x_r = expected_counts(0.2, 100.0).as_vector() + rng.uniform(0, 3, 4)
    x_q = expected_counts(2.5, 100.0).as_vector() + rng.uniform(0, 3, 4)
    out = lms_update(state, 1, 7, 3, x_r, x_q, reference_slice=16)
    assert np.linalg.norm(out.weights - state.weights) <= state.max_step + 1e-15


def test_divergence_guard():
    state = LmsFilterState(step_size=1e9, divergence_bound=1e-6, max_step=1e6, leakage=0.0)
    x_r = expected_counts(0.2, 100.0).as_vector() + 1.0
    x_q = expected_counts(2.5, 100.0).as_vector() + 2.0
    out = lms_update(state, 1, 7, 3, x_r, x_q, reference_slice=16)
    if np.any(out.weights != state.weights):
        pytest.fail("weights should be reset after divergence")
    assert out.diverged


def test_update_validation():
    x = np.ones(4)
    with pytest.raises(ValueError):
        lms_update(LmsFilterState(), 1, 1, 1, x, x)
    with pytest.raises(ValueError):
        lms_update(LmsFilterState(), 17, 1, 1, x, x, reference_slice=2)
    with pytest.raises(ValueError):
        LmsFilterState(weights=np.ones(3))


def test_calibrate_arms():
    assert calibrate_arms([3.0, 1.0, 2.0, 1.0]) == 2
    assert counting_difference([1, 2, 3, 4], [1, 1, 1, 1]) == 6.0
    with pytest.raises(ValueError):
        calibrate_arms([1.0])


def test_calibration_sweep_finds_arm_offset():
    rng = np.random.default_rng(4)
    noise = CountNoise(gain_error=0.0, poisson=False)
    arm = 5 * TWO_PI / 16
    scans = sweep_counts(0.8, arm, 1000.0, noise, rng)
    res = filter_enhanced_scan(scans, LmsFilterState(), update=False)
    # quantum phase ref + arm + 2 pi n / I is closest to ref when n = I - 5
    assert res.reference_slice == 11
    assert np.all((res.slices_q - res.slices_r) % 16 == (np.arange(1, 17) + 5) % 16)


def test_initialized_filter_inverts_overshoot():
    noise = CountNoise(gain_error=0.0, overshoot=0.1, poisson=False)
    st_ = initialize_filter(noise)
    raw, filt = [], []
    for z in np.linspace(0.1, 6.0, 25):
        x = noise.distort(expected_counts(z, 1000.0).as_vector())
        filt.append(abs(wrap_phase(filtered_phase(x, st_) - z)))
        raw.append(abs(wrap_phase(filtered_phase(x, None) - z)))
    assert max(filt) < 1e-6
    assert np.mean(raw) > 0.02


def test_filter_helps_under_overshoot():
    noise = CountNoise(overshoot=0.1)
    rng = np.random.default_rng(0)
    state = train_filter(initialize_filter(noise), 200, 1000.0, noise, rng)
    raw, filt = scan_mae_study(10.0, 1000, rng, state, noise)
    d = filt - raw
    assert d.mean() < 0
    assert not state.diverged


def test_training_is_deterministic():
    noise = CountNoise()
    a = train_filter(initialize_filter(noise), 20, 1000.0, noise, np.random.default_rng(9))
    b = train_filter(initialize_filter(noise), 20, 1000.0, noise, np.random.default_rng(9))
    assert np.array_equal(a.weights, b.weights)
