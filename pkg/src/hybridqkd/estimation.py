"""Global-phase estimation from reference-pulse counts.

The two-phase scan (2PS) drives a phase modulator at ``V_i`` for one half
window and ``V_i + V_half/2`` for the next, records the D0/D1 counts of each
half and inverts the interference fringe to the zero-phase voltage. The
filter-enhanced variant passes the four counts through a 10-tap
convolution filter whose weights are trained by LMS steepest descent
against the slice-difference constraint of an arm calibration sweep.

Phases are in radians and voltages in volts; a voltage ``V`` corresponds to
the modulator phase ``V * pi / V_half``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike

from .drift import TWO_PI, wrap_phase

logger = logging.getLogger(__name__)

N_WEIGHTS = 10
DEFAULT_STEP_SIZE = 7.5e-3
# Cap on 1/sqrt(1 - x^2) when differentiating arccos/arcsin at the fringe edges.
_MAX_ARC_SLOPE = 1e3


class EstimationError(RuntimeError):
    """Counts carry no fringe information (an empty half window)."""


@dataclass(frozen=True)
class CountMatrix:
    """Counts of D0 (``n0``, ``n1``) and D1 (``m0``, ``m1``) in the two scan halves.

    Expected (non-integer) counts are accepted so that the noiseless
    forward model can be fed straight in.
    """

    n0: float
    n1: float
    m0: float
    m1: float

    def __post_init__(self) -> None:
        if min(self.n0, self.n1, self.m0, self.m1) < 0:
            raise ValueError("counts must be nonnegative")

    def as_vector(self) -> np.ndarray:
        """Counts in filter order ``[N0, N1, M0, M1]``."""
        return np.array([self.n0, self.n1, self.m0, self.m1], dtype=float)

    @classmethod
    def from_vector(cls, x: ArrayLike) -> CountMatrix:
        n0, n1, m0, m1 = np.clip(np.asarray(x, dtype=float), 0.0, None)
        return cls(n0, n1, m0, m1)


@dataclass(frozen=True)
class ScanResult:
    zero_phase_voltage: float
    v_arccos: float
    v_arcsin: float
    phase_slice: int
    #: Zero-phase voltage as a phase in [0, 2 pi).
    phase: float
    #: Unquantized slice coordinate in [0, I).
    slice_position: float


def phase_to_slice(phase: ArrayLike, slices: int = 16):
    """Quantize a phase to a slice index in ``1..slices`` (round half up, 0 -> I)."""
    pos = slices * np.mod(phase, TWO_PI) / TWO_PI
    k = np.floor(pos + 0.5).astype(int) % slices
    k = np.where(k == 0, slices, k)
    return int(k) if np.ndim(k) == 0 else k


def two_phase_scan(
    m: CountMatrix, v_initial: float = 0.0, v_half: float = 1.0, slices: int = 16
) -> ScanResult:
    """Estimate the zero-phase voltage from one count matrix.

    arccos/arcsin inputs are clamped to [-1, 1]. The arcsin branch is
    brought within half a period of the arccos branch before averaging so
    that both estimates describe the same fringe.
    """
    if v_half <= 0:
        raise ValueError("v_half must be positive")
    first = m.n0 + m.m0
    second = m.n1 + m.m1
    if first <= 0 or second <= 0:
        raise EstimationError("empty half window in two-phase scan")
    cos_est = float(np.clip(2.0 * m.n0 / first - 1.0, -1.0, 1.0))
    sin_est = float(np.clip(1.0 - 2.0 * m.n1 / second, -1.0, 1.0))

    scale = v_half / np.pi
    v_c = scale * np.arccos(cos_est)
    v_s = scale * np.arcsin(sin_est)
    v_prime = v_initial - v_c if sin_est > 0 else v_initial + v_c
    v_second = v_initial - v_s if cos_est > 0 else v_initial + v_s - v_half
    period = 2.0 * v_half
    v_second = v_prime + (v_second - v_prime + v_half) % period - v_half
    v_bar = 0.5 * (v_prime + v_second)

    phase = float(np.mod(v_bar / scale, TWO_PI))
    return ScanResult(
        zero_phase_voltage=float(v_bar),
        v_arccos=float(v_prime),
        v_arcsin=float(v_second),
        phase_slice=phase_to_slice(phase, slices),
        phase=phase,
        slice_position=slices * phase / TWO_PI,
    )


def expected_counts(
    zero_phase: float, total: float, v_initial: float = 0.0, v_half: float = 1.0
) -> CountMatrix:
    """Noiseless 2PS counts for a fringe whose zero-phase voltage sits at ``zero_phase`` (as a phase).

    ``total`` is the expected D0 + D1 count in each half window.
    """
    phi = v_initial * np.pi / v_half - zero_phase
    c, s = np.cos(phi), np.sin(phi)
    return CountMatrix(
        n0=total * (1 + c) / 2,
        n1=total * (1 - s) / 2,
        m0=total * (1 - c) / 2,
        m1=total * (1 + s) / 2,
    )


def _phase_gradient(y: np.ndarray) -> np.ndarray:
    """d(phase estimate)/d(counts) for the four filtered counts ``[N0, N1, M0, M1]``."""
    n0, n1, m0, m1 = y
    first = n0 + m0
    second = n1 + m1
    grad = np.zeros(4)
    if first <= 0 or second <= 0:
        return grad
    c = 2.0 * n0 / first - 1.0
    s = 1.0 - 2.0 * n1 / second
    arc_c = min(1.0 / np.sqrt(max(1.0 - c * c, 0.0) or 1e-300), _MAX_ARC_SLOPE)
    arc_s = min(1.0 / np.sqrt(max(1.0 - s * s, 0.0) or 1e-300), _MAX_ARC_SLOPE)
    # theta' = theta_i -/+ arccos(c);  theta'' = theta_i -/+ arcsin(s)
    dtheta1_dc = (1.0 if s > 0 else -1.0) * arc_c
    dtheta2_ds = (-1.0 if c > 0 else 1.0) * arc_s
    dc = np.array([2 * m0 / first**2, 0.0, -2 * n0 / first**2, 0.0])
    ds = np.array([0.0, -2 * m1 / second**2, 0.0, 2 * n1 / second**2])
    grad = 0.5 * (dtheta1_dc * dc + dtheta2_ds * ds)
    return grad


# -- LMS filter ----------------------------------------------------------------

def identity_weights() -> np.ndarray:
    w = np.zeros(N_WEIGHTS)
    w[0] = 1.0
    return w


@dataclass(frozen=True, eq=False)
class LmsFilterState:
    weights: np.ndarray = field(default_factory=identity_weights)
    step_size: float = DEFAULT_STEP_SIZE
    reference_slice: int | None = None
    initial_weights: np.ndarray | None = None
    divergence_bound: float = 1e3
    #: Per-update pull back toward ``initial_weights`` (leaky LMS). The slice
    #: constraint only sees r/q differences, so without a leak the weights
    #: random-walk along directions that shift both phases together.
    leakage: float = 0.1
    #: Upper bound on the Euclidean norm of one update. Near the fringe
    #: edges the arc slopes blow up and a single noisy scan can otherwise
    #: throw the weights far from any useful filter.
    max_step: float = 0.01
    diverged: bool = False
    updates: int = 0

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (N_WEIGHTS,):
            raise ValueError(f"filter needs exactly {N_WEIGHTS} weights")
        if not np.all(np.isfinite(w)):
            raise ValueError("filter weights must be finite")
        object.__setattr__(self, "weights", w)
        if not 0.0 <= self.leakage < 1.0:
            raise ValueError("leakage must lie in [0, 1)")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.initial_weights is None:
            object.__setattr__(self, "initial_weights", w.copy())


def lms_convolve(x: ArrayLike, state: LmsFilterState) -> np.ndarray:
    """Zero-padded convolution of the weights with ``x``, keeping output positions 1..4."""
    x = np.asarray(x, dtype=float)
    return np.convolve(state.weights, x)[: x.size]


def _convolution_jacobian(x: np.ndarray) -> np.ndarray:
    """``J[k, j] = d y_k / d w_j`` for ``y = conv(w, x)[:len(x)]``."""
    jac = np.zeros((x.size, N_WEIGHTS))
    for k in range(x.size):
        for j in range(min(k + 1, N_WEIGHTS)):
            jac[k, j] = x[k - j]
    return jac


def slice_error(s_r: int, s_q: int, n: int, reference_slice: int, slices: int = 16) -> float:
    """LMS error ``d - d_hat`` between the sweep constraint and the estimated slices."""
    desired = np.cos(np.pi * abs(n - reference_slice) / slices) ** 2
    estimated = np.cos(np.pi * abs(s_r - s_q) / slices) ** 2
    return float(desired - estimated)


def lms_gradient(
    state: LmsFilterState,
    x_r: ArrayLike,
    x_q: ArrayLike,
    error: float,
    slices: int = 16,
) -> np.ndarray:
    """Gradient of the squared error with respect to the weights.

    The chain runs through the convolution and a smooth version of the
    two-phase scan (unquantized slice coordinates).
    """
    x_r = np.asarray(x_r, dtype=float)
    x_q = np.asarray(x_q, dtype=float)
    y_r = lms_convolve(x_r, state)
    y_q = lms_convolve(x_q, state)
    try:
        pos_r = two_phase_scan(CountMatrix.from_vector(y_r), slices=slices).slice_position
        pos_q = two_phase_scan(CountMatrix.from_vector(y_q), slices=slices).slice_position
    except EstimationError:
        return np.zeros(N_WEIGHTS)
    to_slices = slices / TWO_PI
    dpos_r = to_slices * _phase_gradient(y_r) @ _convolution_jacobian(x_r)
    dpos_q = to_slices * _phase_gradient(y_q) @ _convolution_jacobian(x_q)
    delta = pos_r - pos_q
    # d_hat = cos^2(pi * delta / I);  d(e^2)/dw = -2 e * d(d_hat)/dw
    ddhat_ddelta = -(np.pi / slices) * np.sin(TWO_PI * delta / slices)
    return -2.0 * error * ddhat_ddelta * (dpos_r - dpos_q)


def lms_update(
    state: LmsFilterState,
    s_r: int,
    s_q: int,
    n: int,
    x_r: ArrayLike,
    x_q: ArrayLike,
    reference_slice: int | None = None,
    slices: int = 16,
) -> LmsFilterState:
    """One steepest-descent step ``w <- w - step * d(e^2)/dw``, norm-capped, then the leak.

    If any weight leaves ``[-divergence_bound, divergence_bound]`` the filter
    is reset to its initial weights and flagged as diverged.
    """
    k = state.reference_slice if reference_slice is None else reference_slice
    if k is None:
        raise ValueError("reference slice K is required")
    for name, v in (("s_r", s_r), ("s_q", s_q), ("n", n), ("K", k)):
        if not 1 <= v <= slices:
            raise ValueError(f"{name}={v} outside 1..{slices}")
    err = slice_error(s_r, s_q, n, k, slices)
    if err == 0.0:
        return dataclasses.replace(state, reference_slice=k, updates=state.updates + 1)
    step = state.step_size * lms_gradient(state, x_r, x_q, err, slices)
    norm = float(np.linalg.norm(step))
    if norm > state.max_step:
        step *= state.max_step / norm
    w0 = state.initial_weights
    w = w0 + (1.0 - state.leakage) * (state.weights - step - w0)
    if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > state.divergence_bound:
        logger.warning("LMS filter diverged; resetting to initial weights")
        return dataclasses.replace(
            state,
            weights=state.initial_weights.copy(),
            reference_slice=k,
            diverged=True,
            updates=state.updates + 1,
        )
    return dataclasses.replace(state, weights=w, reference_slice=k, updates=state.updates + 1)


def counting_difference(x_r: ArrayLike, x_q: ArrayLike) -> float:
    """L1 distance between two count vectors."""
    return float(np.sum(np.abs(np.asarray(x_r, float) - np.asarray(x_q, float))))


def calibrate_arms(statistics: ArrayLike) -> int:
    """Slice (1-based) with the smallest counting difference; ties go to the lower slice."""
    stats = np.asarray(statistics, dtype=float)
    if stats.ndim != 1 or stats.size < 2:
        raise ValueError("need one statistic per phase slice")
    return int(np.argmin(stats)) + 1


class FilteredScan(NamedTuple):
    slices_r: np.ndarray
    slices_q: np.ndarray
    state: LmsFilterState
    reference_slice: int


def filter_enhanced_scan(
    raw_scans: Sequence[tuple[CountMatrix, CountMatrix]],
    state: LmsFilterState,
    update: bool = True,
) -> FilteredScan:
    """Run the filtered 2PS over one arm-calibration sweep of ``I`` slices.

    ``raw_scans[n-1]`` holds the (reference, quantum) count matrices recorded
    while the interferometer modulator sits on slice ``n``.
    """
    slices = len(raw_scans)
    if slices < 2:
        raise ValueError("a sweep needs at least two slices")
    xs_r = [r.as_vector() for r, _ in raw_scans]
    xs_q = [q.as_vector() for _, q in raw_scans]
    k = calibrate_arms([counting_difference(a, b) for a, b in zip(xs_r, xs_q)])
    s_r = np.zeros(slices, dtype=int)
    s_q = np.zeros(slices, dtype=int)
    for idx in range(slices):
        n = idx + 1
        y_r = lms_convolve(xs_r[idx], state)
        y_q = lms_convolve(xs_q[idx], state)
        s_r[idx] = two_phase_scan(CountMatrix.from_vector(y_r), slices=slices).phase_slice
        s_q[idx] = two_phase_scan(CountMatrix.from_vector(y_q), slices=slices).phase_slice
        if update:
            state = lms_update(
                state, s_r[idx], s_q[idx], n, xs_r[idx], xs_q[idx], k, slices
            )
    return FilteredScan(s_r, s_q, dataclasses.replace(state, reference_slice=k), k)


def filtered_phase(x: ArrayLike, state: LmsFilterState | None, slices: int = 16) -> float:
    """Phase estimate (rad, [0, 2 pi)) of one count vector, optionally filtered."""
    y = np.asarray(x, dtype=float) if state is None else lms_convolve(x, state)
    return two_phase_scan(CountMatrix.from_vector(y), slices=slices).phase


# -- count noise and filter initialization ------------------------------------

@dataclass(frozen=True)
class CountNoise:
    """Measurement model ``N = N_hat + additive_gaussian + systematic``.

    ``gain_error`` scales the D1 counts relative to D0. ``overshoot`` leaks a
    fraction of each count slot into the next one in ``[N0, N1, M0, M1]``
    order (modulator overshoot at the half-window step).
    """

    gaussian_std: float = 0.0
    gain_error: float = 0.01
    overshoot: float = 0.0
    poisson: bool = True

    def distort(self, x: np.ndarray) -> np.ndarray:
        y = np.array(x, dtype=float)
        y[..., 2:] *= 1.0 + self.gain_error
        if self.overshoot:
            y[..., 1:] = y[..., 1:] + self.overshoot * y[..., :-1]
        return y

    def sample(self, expected: ArrayLike, rng: np.random.Generator) -> np.ndarray:
        mean = self.distort(np.asarray(expected, dtype=float))
        counts = rng.poisson(mean).astype(float) if self.poisson else mean
        if self.gaussian_std:
            counts = counts + self.gaussian_std * rng.standard_normal(counts.shape)
        return np.clip(counts, 0.0, None)


def initialize_filter(
    noise: CountNoise,
    total: float = 1000.0,
    points: int = 256,
    step_size: float = DEFAULT_STEP_SIZE,
    rng: np.random.Generator | None = None,
    leakage: float = 0.1,
) -> LmsFilterState:
    """Least-squares initial weights from a simulated attenuation channel.

    The modulator voltage is swept over a full fringe period; the weights
    that best map the measured count vectors back onto the expected ones
    become the starting point for LMS training. Without ``rng`` the
    measured counts are noiseless (distortion only).
    """
    rows = []
    targets = []
    for phase in np.linspace(0.0, TWO_PI, points, endpoint=False):
        ideal = expected_counts(phase, total).as_vector()
        measured = (
            noise.sample(ideal, rng)
            if rng is not None
            else noise.distort(ideal)
        )
        rows.append(_convolution_jacobian(measured))
        targets.append(ideal)
    design = np.vstack(rows)
    target = np.concatenate(targets)
    w, *_ = np.linalg.lstsq(design, target, rcond=None)
    return LmsFilterState(weights=w, step_size=step_size, leakage=leakage)


def sweep_counts(
    reference_phase: float,
    arm_offset: float,
    total: float,
    noise: CountNoise,
    rng: np.random.Generator,
    slices: int = 16,
) -> list[tuple[CountMatrix, CountMatrix]]:
    """Simulated reference/quantum count matrices for one calibration sweep.

    On slice ``n`` the quantum pulse carries an extra ``2 pi n / I`` plus the
    current arm offset relative to the reference pulse.
    """
    out = []
    x_r_mean = expected_counts(reference_phase, total).as_vector()
    for n in range(1, slices + 1):
        q_phase = reference_phase + arm_offset + TWO_PI * n / slices
        x_q_mean = expected_counts(q_phase, total).as_vector()
        x_r = noise.sample(x_r_mean, rng)
        x_q = noise.sample(x_q_mean, rng)
        out.append((CountMatrix.from_vector(x_r), CountMatrix.from_vector(x_q)))
    return out


def train_filter(
    state: LmsFilterState,
    rounds: int,
    total: float,
    noise: CountNoise,
    rng: np.random.Generator,
    slices: int = 16,
) -> LmsFilterState:
    """Run LMS over ``rounds`` simulated calibration sweeps at random phases."""
    for _ in range(rounds):
        scans = sweep_counts(
            rng.uniform(0, TWO_PI), rng.uniform(0, TWO_PI), total, noise, rng, slices
        )
        try:
            state = filter_enhanced_scan(scans, state).state
        except EstimationError:
            continue
    return state


def scan_mae_study(
    total: float,
    trials: int,
    rng: np.random.Generator,
    state: LmsFilterState,
    noise: CountNoise = CountNoise(),
    slices: int = 16,
) -> tuple[np.ndarray, np.ndarray]:
    """Absolute phase errors (rad) of raw and filtered 2PS on the same noisy counts.

    ``total`` is the expected D0 + D1 count per half window. Trials whose
    counts are empty in a half window are scored as a pi/2 error (no
    information) for both estimators.
    """
    raw = np.empty(trials)
    filt = np.empty(trials)
    for t in range(trials):
        truth = rng.uniform(0, TWO_PI)
        x = noise.sample(expected_counts(truth, total).as_vector(), rng)
        try:
            raw[t] = abs(wrap_phase(filtered_phase(x, None, slices) - truth))
        except EstimationError:
            raw[t] = np.pi / 2
        try:
            filt[t] = abs(wrap_phase(filtered_phase(x, state, slices) - truth))
        except EstimationError:
            filt[t] = np.pi / 2
    return raw, filt
