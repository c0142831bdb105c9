"""Stochastic phase processes seen by the reference and quantum pulses.

Two processes are modeled, both as driftless Wiener processes:

* the differential channel phase between Alice and Bob, which is fast
  (rad per sqrt-millisecond) and affects reference and quantum pulses alike;
* the arm-length difference of the asymmetric interferometers, which is slow
  (rad per sqrt-second) and is the only thing the arm calibration removes.

The OPLL residual enters as white Gaussian noise on the Alice-Bob phase
difference, drawn fresh for each window.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.stats import norm

TWO_PI = 2.0 * np.pi

#: Reported maximum channel drift rates (rad/ms) by fiber distance (km).
CHANNEL_DRIFT_MAX_RATE = {300.0: 6.34, 400.0: 14.95}

#: Arm drift diffusion (rad/sqrt(s)). Keeps 10 s of accumulated drift at
#: about 3.6 degrees rms, well inside half a phase slice.
DEFAULT_ARM_DRIFT_STD = 0.02


def wrap_phase(x: ArrayLike):
    """Map phases into (-pi, pi]."""
    out = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)
    return float(out) if out.ndim == 0 else out


def residual_error(phi_q: ArrayLike, phi_ref: ArrayLike):
    """Absolute wrapped difference between quantum and reference phases, in [0, pi]."""
    return np.abs(wrap_phase(np.asarray(phi_q) - np.asarray(phi_ref)))


def channel_drift_std_from_max_rate(
    max_rate: float, percentile: float = 99.9, bin_ms: float = 1.0
) -> float:
    """Wiener diffusion (rad/sqrt(ms)) whose |increment|/bin hits ``max_rate`` at ``percentile``."""
    z = norm.ppf(0.5 + percentile / 200.0)
    return max_rate * np.sqrt(bin_ms) / z


def channel_drift_std_for_distance(distance_km: float) -> float:
    """Log-linear interpolation of the calibrated diffusion between reported distances."""
    (d1, r1), (d2, r2) = sorted(CHANNEL_DRIFT_MAX_RATE.items())
    s1 = np.log(channel_drift_std_from_max_rate(r1))
    s2 = np.log(channel_drift_std_from_max_rate(r2))
    return float(np.exp(s1 + (s2 - s1) * (distance_km - d1) / (d2 - d1)))


@dataclass(frozen=True)
class DriftConfig:
    channel_drift_rate_std: float = channel_drift_std_from_max_rate(6.34)
    arm_drift_rate_std: float = DEFAULT_ARM_DRIFT_STD
    opll_noise_variance: float = 5.6e-3
    seed: int | None = None

    def __post_init__(self) -> None:
        for f in ("channel_drift_rate_std", "arm_drift_rate_std", "opll_noise_variance"):
            if not getattr(self, f) >= 0:
                raise ValueError(f"{f} must be >= 0")

    @classmethod
    def quiet(cls) -> DriftConfig:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def for_distance(cls, distance_km: float, **kw) -> DriftConfig:
        return cls(channel_drift_rate_std=channel_drift_std_for_distance(distance_km), **kw)


@dataclass(frozen=True)
class InterferometerState:
    """Phases accumulated by the two pulse types on their way to the beam splitter.

    ``opll_noise`` is the current window's OPLL sample; it is not accumulated.
    """

    phi_0: float = 0.0
    phi_short: float = 0.0
    phi_long: float = 0.0
    phi_channel: float = 0.0
    opll_noise: float = 0.0
    time: float = 0.0

    @property
    def phase_ref(self) -> float:
        return self.phi_0 + self.phi_short + self.phi_channel + self.opll_noise

    @property
    def phase_q(self) -> float:
        return self.phi_0 + self.phi_long + self.phi_channel + self.opll_noise

    @property
    def arm_difference(self) -> float:
        return self.phi_long - self.phi_short

    def wrapped(self) -> InterferometerState:
        return dataclasses.replace(
            self,
            phi_0=wrap_phase(self.phi_0),
            phi_short=wrap_phase(self.phi_short),
            phi_long=wrap_phase(self.phi_long),
            phi_channel=wrap_phase(self.phi_channel),
        )


def step_channel_phase(
    state: InterferometerState, dt: float, cfg: DriftConfig, rng: np.random.Generator
) -> InterferometerState:
    """Advance the channel phase by ``dt`` seconds."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    step = cfg.channel_drift_rate_std * np.sqrt(dt * 1e3) * rng.standard_normal()
    opll = np.sqrt(cfg.opll_noise_variance) * rng.standard_normal()
    return dataclasses.replace(
        state, phi_channel=state.phi_channel + step, opll_noise=opll, time=state.time + dt
    )


def step_arm_phase(
    state: InterferometerState, dt: float, cfg: DriftConfig, rng: np.random.Generator
) -> InterferometerState:
    """Advance the long-minus-short arm phase by ``dt`` seconds.

    Time is not advanced here; pair with :func:`step_channel_phase`.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    step = cfg.arm_drift_rate_std * np.sqrt(dt) * rng.standard_normal()
    return dataclasses.replace(state, phi_long=state.phi_long + step)


def wiener_paths(
    std: float,
    times: ArrayLike,
    rng: np.random.Generator,
    n_paths: int | None = None,
    start: float | np.ndarray = 0.0,
) -> np.ndarray:
    """Sample a Wiener process with diffusion ``std`` at sorted ``times``.

    ``times`` are in the unit ``std`` is expressed per square root of.
    The first sample is ``start`` plus the increment from time zero.
    """
    times = np.asarray(times, dtype=float)
    dt = np.diff(times, prepend=0.0)
    if np.any(dt < 0):
        raise ValueError("times must be sorted and nonnegative")
    if n_paths is None:
        return start + np.cumsum(std * np.sqrt(dt) * rng.standard_normal(times.shape))
    steps = std * np.sqrt(dt) * rng.standard_normal((n_paths, times.size))
    return np.reshape(start, (-1, 1)) + np.cumsum(steps, axis=1)


def drift_trace(
    cfg: DriftConfig,
    duration: float,
    dt: float,
    rng: np.random.Generator,
) -> dict[str, np.ndarray]:
    """Uncompensated time series of channel phase, arm difference and residual error."""
    t = np.arange(1, int(round(duration / dt)) + 1) * dt
    channel = wiener_paths(cfg.channel_drift_rate_std, t * 1e3, rng)
    arm = wiener_paths(cfg.arm_drift_rate_std, t, rng)
    return {
        "t": t,
        "phi_channel": wrap_phase(channel),
        "arm_difference": wrap_phase(arm),
        "phase_error": residual_error(arm, 0.0),
    }
