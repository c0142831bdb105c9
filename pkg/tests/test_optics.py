import numpy as np
import pytest

from hybridqkd.optics import (
    ClickOutcome,
    PulsePair,
    any_click_probability,
    click_probabilities,
    interference_means,
    mean_photons_at_detectors,
    misalignment_flip,
    pattern_probabilities,
    sample_clicks,
)
from hybridqkd.params import SystemParams


def test_interference_extremes():
    n0, n1 = interference_means(0.1, 0.1, 0.0)
    assert n0 == pytest.approx(0.2)
    assert n1 == pytest.approx(0.0, abs=1e-15)
    n0, n1 = interference_means(0.1, 0.1, np.pi)
    assert n0 == pytest.approx(0.0, abs=1e-15)
    assert n1 == pytest.approx(0.2)


def test_single_source_splits_evenly():
    n0, n1 = mean_photons_at_detectors(PulsePair(0.4, 0.0, eta_a=0.5))
    assert n0 == n1 == pytest.approx(0.1)


def test_total_mean_conserved():
    phase = np.linspace(0, 2 * np.pi, 33)
    n0, n1 = interference_means(0.3, 0.05, phase)
    assert np.allclose(n0 + n1, 0.35)


def test_dark_count_floor():
    p0, p1 = click_probabilities(0.0, 0.0, SystemParams())
    assert p0 == p1 == pytest.approx(1.5e-8)


def test_click_formula():
    p0, _ = click_probabilities(0.2, 0.0, 1e-6)
    assert p0 == pytest.approx(1 - (1 - 1e-6) * np.exp(-0.2))
    with pytest.raises(ValueError):
        click_probabilities(-0.1, 0.0, 0.0)


def test_any_click_depends_on_total_only():
    p_d = 1e-5
    for phase in (0.0, 0.7, np.pi):
        n0, n1 = interference_means(0.2, 0.1, phase)
        c0, c1 = click_probabilities(n0, n1, p_d)
        assert 1 - (1 - c0) * (1 - c1) == pytest.approx(float(any_click_probability(0.3, p_d)))


def test_pattern_probabilities_partition():
    a, b, both = pattern_probabilities(0.3, 0.6)
    assert a + b + both + 0.7 * 0.4 == pytest.approx(1.0)


def test_sample_clicks_frequency():
    rng = np.random.default_rng(3)
    c0, c1 = sample_clicks(np.full(200_000, 0.2), np.full(200_000, 0.05), rng)
    assert c0.mean() == pytest.approx(0.2, abs=0.005)
    assert c1.mean() == pytest.approx(0.05, abs=0.003)


def test_effective_outcome():
    assert ClickOutcome(True, False).effective
    assert not ClickOutcome(True, True).effective
    assert not ClickOutcome(False, False).effective


def test_misalignment_flip_rate():
    rng = np.random.default_rng(0)
    out = misalignment_flip(np.zeros(100_000), 0.041, rng)
    assert np.mean(out != 0) == pytest.approx(0.041, abs=0.003)
    with pytest.raises(ValueError):
        misalignment_flip(0.0, 0.7, rng)


def test_pulse_pair_validation():
    with pytest.raises(ValueError):
        PulsePair(-0.1, 0.1)
    assert PulsePair(0.1, 0.1, phase_a=3 * np.pi).phase_a == pytest.approx(np.pi)
