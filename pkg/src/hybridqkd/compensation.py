"""Closed-loop arm compensation: periodic calibration sweeps against drift.

Every ``period`` seconds the interferometer modulator sweeps the ``I``
phase slices on the quantum pulses while the reference pulses are left
alone; the slice with the smallest reference/quantum counting difference
becomes the new correction. Between calibrations the arm difference keeps
drifting and the residual error grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .drift import TWO_PI, DriftConfig, residual_error, wiener_paths, wrap_phase
from .estimation import (
    CountNoise,
    EstimationError,
    LmsFilterState,
    calibrate_arms,
    counting_difference,
    lms_convolve,
    sweep_counts,
)


@dataclass(frozen=True)
class CompensationConfig:
    period: float = 10.0
    scan_time: float = 200e-6
    #: Clock synchronization and polarization compensation per period (s).
    overhead: float = 0.1
    #: Expected D0 + D1 counts per half window during a calibration sweep.
    calibration_counts: float = 1000.0
    slices: int = 16
    sample_dt: float = 0.01
    noise: CountNoise = field(default_factory=CountNoise)

    def __post_init__(self) -> None:
        if not (self.period > 0 and self.sample_dt > 0):
            raise ValueError("period and sample_dt must be positive")
        if self.scan_time < 0 or self.overhead < 0:
            raise ValueError("scan_time and overhead must be >= 0")


def duty_cycle(cfg: CompensationConfig) -> float:
    """Fraction of wall-clock time spent transmitting quantum signals."""
    return cfg.period / (cfg.period + cfg.scan_time + cfg.overhead)


@dataclass(frozen=True, eq=False)
class ClosedLoopResult:
    t: np.ndarray
    arm_difference: np.ndarray
    correction: np.ndarray
    #: |wrap(arm + correction)| per sample, in [0, pi].
    phase_error: np.ndarray
    calibration_times: np.ndarray
    chosen_slices: np.ndarray
    duty_cycle: float

    @property
    def std_deg(self) -> float:
        """Standard deviation of the residual-error histogram (degrees)."""
        return float(np.degrees(np.std(self.phase_error)))

    @property
    def rms_deg(self) -> float:
        signed = wrap_phase(self.arm_difference + self.correction)
        return float(np.degrees(np.sqrt(np.mean(np.square(signed)))))


def choose_slice(
    arm_offset: float,
    cfg: CompensationConfig,
    rng: np.random.Generator,
    filter_state: LmsFilterState | None = None,
) -> int:
    """One calibration sweep; returns the slice that best cancels ``arm_offset``."""
    scans = sweep_counts(
        rng.uniform(0.0, TWO_PI), arm_offset, cfg.calibration_counts, cfg.noise, rng, cfg.slices
    )
    stats = []
    for r, q in scans:
        x_r, x_q = r.as_vector(), q.as_vector()
        if filter_state is not None:
            x_r, x_q = lms_convolve(x_r, filter_state), lms_convolve(x_q, filter_state)
        stats.append(counting_difference(x_r, x_q))
    return calibrate_arms(stats)


def run_closed_loop(
    drift: DriftConfig,
    duration: float,
    cfg: CompensationConfig = CompensationConfig(),
    rng: np.random.Generator | None = None,
    compensate: bool = True,
    filter_state: LmsFilterState | None = None,
    initial_arm: float | None = None,
) -> ClosedLoopResult:
    """Simulate ``duration`` seconds of arm drift with periodic compensation.

    The arm difference starts at ``initial_arm`` (uniform on the circle if
    not given), so the slice quantization residual is exercised. With
    ``compensate=False`` only the initial calibration at t = 0 is made, so
    the residual error follows the free arm drift afterwards.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(drift.seed) if rng is None else rng
    t = np.arange(0, int(round(duration / cfg.sample_dt)) + 1) * cfg.sample_dt
    start = rng.uniform(-np.pi, np.pi) if initial_arm is None else initial_arm
    arm = start + np.concatenate([[0.0], wiener_paths(drift.arm_drift_rate_std, t[1:], rng)])
    cal_times = np.arange(0.0, duration + 1e-12, cfg.period) if compensate else np.array([0.0])
    correction = np.zeros_like(t)
    chosen = []
    for i, tc in enumerate(cal_times):
        idx = int(np.searchsorted(t, tc - 1e-12))
        try:
            k = choose_slice(arm[idx], cfg, rng, filter_state)
        except EstimationError:
            k = chosen[-1] if chosen else cfg.slices
        chosen.append(k)
        correction[idx:] = TWO_PI * k / cfg.slices
    return ClosedLoopResult(
        t=t,
        arm_difference=arm,
        correction=correction,
        phase_error=residual_error(arm + correction, 0.0),
        calibration_times=cal_times,
        chosen_slices=np.array(chosen, dtype=int),
        duty_cycle=duty_cycle(cfg),
    )


def phase_demo(
    distance_km: float,
    duration: float,
    seed: int = 0,
    cfg: CompensationConfig = CompensationConfig(),
    drift: DriftConfig | None = None,
) -> dict[str, object]:
    """Compensated and uncompensated traces for one link, sharing the drift path."""
    drift = DriftConfig.for_distance(distance_km) if drift is None else drift
    seeds = np.random.SeedSequence(seed).spawn(3)
    start = float(np.random.default_rng(seeds[2]).uniform(-np.pi, np.pi))
    on = run_closed_loop(drift, duration, cfg, np.random.default_rng(seeds[0]), initial_arm=start)
    off = run_closed_loop(
        drift, duration, cfg, np.random.default_rng(seeds[0]), compensate=False, initial_arm=start
    )
    channel = wiener_paths(drift.channel_drift_rate_std, on.t[1:] * 1e3, np.random.default_rng(seeds[1]))
    return {
        "t": on.t,
        "phi_channel": wrap_phase(np.concatenate([[0.0], channel])),
        "arm_difference": on.arm_difference,
        "error_compensated": on.phase_error,
        "error_uncompensated": off.phase_error,
        "std_deg": on.std_deg,
        "std_deg_uncompensated": off.std_deg,
        "duty_cycle": on.duty_cycle,
        "chosen_slices": on.chosen_slices,
    }
