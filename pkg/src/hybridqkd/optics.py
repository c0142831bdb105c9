"""Click statistics for weak coherent pulses interfering at Charlie's beam splitter.

Detector efficiency is already folded into the arm transmittances, so the
mean photon numbers here are "at the detector". Detectors are threshold
(on/off) devices with Poissonian light and an independent dark-count
probability per gated window.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .params import SystemParams

TWO_PI = 2.0 * np.pi


class WindowKind(str, enum.Enum):
    REFERENCE = "reference"
    QUANTUM = "quantum"
    EARLY_BIN = "early_bin"
    LATE_BIN = "late_bin"


@dataclass(frozen=True)
class PulsePair:
    intensity_a: float
    intensity_b: float
    phase_a: float = 0.0
    phase_b: float = 0.0
    eta_a: float = 1.0
    eta_b: float = 1.0

    def __post_init__(self) -> None:
        if self.intensity_a < 0 or self.intensity_b < 0:
            raise ValueError("intensities must be >= 0")
        if not (0 <= self.eta_a <= 1 and 0 <= self.eta_b <= 1):
            raise ValueError("transmittances must lie in [0, 1]")
        object.__setattr__(self, "phase_a", float(np.mod(self.phase_a, TWO_PI)))
        object.__setattr__(self, "phase_b", float(np.mod(self.phase_b, TWO_PI)))


@dataclass(frozen=True)
class ClickOutcome:
    d0_click: bool
    d1_click: bool
    window_kind: WindowKind = WindowKind.QUANTUM

    @property
    def effective(self) -> bool:
        return self.d0_click != self.d1_click


def interference_means(a: ArrayLike, b: ArrayLike, phase_diff: ArrayLike):
    """Mean photon numbers at D0 and D1 for effective intensities ``a`` and ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mean = 0.5 * (a + b)
    cross = np.sqrt(a * b) * np.cos(phase_diff)
    return mean + cross, mean - cross


def mean_photons_at_detectors(pair: PulsePair) -> tuple[float, float]:
    a = pair.intensity_a * pair.eta_a
    b = pair.intensity_b * pair.eta_b
    n0, n1 = interference_means(a, b, pair.phase_a - pair.phase_b)
    return float(n0), float(n1)


def click_probabilities(n0: ArrayLike, n1: ArrayLike, sys: SystemParams | float):
    """Per-detector click probability ``1 - (1 - p_d) exp(-n)``."""
    p_d = sys.dark_count_rate if isinstance(sys, SystemParams) else float(sys)
    n0 = np.asarray(n0, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    if np.any(n0 < 0) or np.any(n1 < 0):
        raise ValueError("mean photon numbers must be >= 0")
    with np.errstate(divide="ignore"):
        log_keep = np.log1p(-p_d)
    p0 = -np.expm1(log_keep - n0)
    p1 = -np.expm1(log_keep - n1)
    if p0.ndim == 0:
        return float(p0), float(p1)
    return p0, p1


def sample_click(
    p0: float,
    p1: float,
    rng: np.random.Generator,
    window_kind: WindowKind = WindowKind.QUANTUM,
) -> ClickOutcome:
    if not (0 <= p0 <= 1 and 0 <= p1 <= 1):
        raise ValueError("click probabilities must lie in [0, 1]")
    u = rng.random(2)
    return ClickOutcome(bool(u[0] < p0), bool(u[1] < p1), window_kind)


def sample_clicks(p0: ArrayLike, p1: ArrayLike, rng: np.random.Generator):
    """Vectorized :func:`sample_click`; returns two boolean arrays."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    shape = np.broadcast_shapes(p0.shape, p1.shape)
    u = rng.random((2, *shape))
    return u[0] < p0, u[1] < p1


def misalignment_flip(phase_diff: ArrayLike, e_misalign: float, rng: np.random.Generator):
    """Add pi to the phase difference with probability ``e_misalign``.

    Adding pi swaps the roles of D0 and D1, i.e. it flips the interference
    outcome.
    """
    if not 0 <= e_misalign <= 0.5:
        raise ValueError("misalignment probability must lie in [0, 0.5]")
    phase_diff = np.asarray(phase_diff, dtype=float)
    flips = rng.random(phase_diff.shape) < e_misalign
    out = phase_diff + np.pi * flips
    return float(out) if out.ndim == 0 else out


def pattern_probabilities(p0, p1):
    """Probabilities of (D0 only, D1 only, both) for independent detectors."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    return p0 * (1 - p1), (1 - p0) * p1, p0 * p1


def any_click_probability(total_mean: ArrayLike, dark_count_rate: float, detectors: int = 2):
    """Probability that at least one of ``detectors`` clicks.

    Depends only on the total mean photon number reaching the detectors,
    which interference redistributes but does not change.
    """
    total_mean = np.asarray(total_mean, dtype=float)
    with np.errstate(divide="ignore"):
        log_keep = np.log1p(-dark_count_rate)
    return -np.expm1(detectors * log_keep - total_mean)
