"""Sending-or-not-sending twin-field pipeline: tallies, Z sifting and AOPP.

Each window pairs one Alice state with one Bob state (see
:func:`~hybridqkd.protocol.windows.state_table`). Their pulses interfere at
Charlie with phase difference ``delta``. An effective event is a window
in which exactly one detector clicks (``at_least_one`` is available as an
alternative rule).

Phase model for the X-basis post-selection cells (``nu-nu``,
``omega-omega``): only windows whose announced slices are equal or
opposite are kept, a fraction ``2/I`` of them. The residual phase is
``delta = pi*opposite + u + g`` where ``u`` is the slice-quantization
residual of the channel-phase estimate (uniform on ``(-pi/I, pi/I)``) and
``g`` is Gaussian noise from the OPLL plus any configured estimation or
arm-drift variance. The misalignment ``e_PS`` then flips the outcome.
For all other cells the phase difference is uniform on the circle.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import ive

from ..drift import DriftConfig, wiener_paths, wrap_phase
from ..optics import click_probabilities, interference_means
from ..params import FiberSpec, ProtocolKind, ProtocolParams, Side, SystemParams, arm_transmittance
from .tally import OTHER, SNS_CELLS, SNS_X_CELLS, Cell, TallySheet, ZEvents
from .windows import state_table

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
ClickRule = Literal["exactly_one", "at_least_one"]

#: Windows per Monte Carlo chunk. Chunks get their own spawned seed, so
#: results do not depend on the number of worker threads.
CHUNK_WINDOWS = 50_000_000
_Z_STATES = ("mu", "0")


@dataclass(frozen=True)
class SnsOptions:
    click_rule: ClickRule = "exactly_one"
    #: Extra Gaussian phase variance (rad^2) from imperfect phase estimation.
    estimation_variance: float = 0.0
    #: Mean arm-drift variance (rad^2) accrued between compensations.
    arm_variance: float = 0.0
    #: Compensation period (s) used to turn a drift config into ``arm_variance``.
    compensation_period: float = 10.0
    record_events: bool = False
    legendre_points: int = 32
    hermite_points: int = 24

    def __post_init__(self) -> None:
        if self.click_rule not in ("exactly_one", "at_least_one"):
            raise ValueError(f"unknown click rule {self.click_rule!r}")
        if self.estimation_variance < 0 or self.arm_variance < 0:
            raise ValueError("phase variances must be >= 0")


@dataclass(frozen=True)
class CellSpec:
    key: str
    alice: str
    bob: str
    prob: float
    a: float
    b: float
    post_selected: bool


def cell_key(alice: str, bob: str) -> str:
    key = f"{alice}-{bob}"
    return key if key in SNS_CELLS else OTHER


def cell_specs(params: ProtocolParams, sys: SystemParams, fiber: FiberSpec) -> list[CellSpec]:
    """All 25 Alice x Bob state combinations with their intensities at the detectors."""
    eta_a = arm_transmittance(fiber, Side.ALICE, sys)
    eta_b = arm_transmittance(fiber, Side.BOB, sys)
    table = state_table(params)
    out = []
    for sa, pa, xa in table:
        for sb, pb, xb in table:
            key = cell_key(sa, sb)
            out.append(
                CellSpec(key, sa, sb, pa * pb, xa * eta_a, xb * eta_b, key in SNS_X_CELLS)
            )
    return out


def phase_noise_variance(sys: SystemParams, opts: SnsOptions, drift: DriftConfig | None) -> float:
    var = sys.opll_residual_phase_variance + opts.estimation_variance + opts.arm_variance
    if drift is not None and opts.arm_variance == 0.0:
        # Arm drift grows linearly in variance between compensations.
        var += 0.5 * drift.arm_drift_rate_std**2 * opts.compensation_period
    return var


# -- analytic expectations ----------------------------------------------------

def effective_probability_uniform(a, b, p_d: float, rule: ClickRule = "exactly_one"):
    """Phase-averaged probability of an effective event for a uniform phase difference."""
    s = 0.5 * (np.asarray(a, float) + np.asarray(b, float))
    r = np.sqrt(np.asarray(a, float) * np.asarray(b, float))
    keep = 1.0 - p_d
    any_click = -np.expm1(2.0 * np.log1p(-p_d) - 2.0 * s)
    if rule == "at_least_one":
        return any_click
    # E[exp(-n0)] = E[exp(-n1)] = exp(-s) I0(r); ive keeps it finite for large r.
    single = keep * ive(0, r) * np.exp(r - s)
    return 2.0 * single - 2.0 * keep**2 * np.exp(-2.0 * s)


def _pattern_probs(a: float, b: float, delta: np.ndarray, p_d: float):
    n0, n1 = interference_means(a, b, delta)
    c0, c1 = click_probabilities(n0, n1, p_d)
    return c0 * (1 - c1), (1 - c0) * c1, c0 * c1


def x_cell_expectation(
    a: float, b: float, sys: SystemParams, variance: float, opts: SnsOptions
) -> tuple[float, float]:
    """Per accepted window: (effective-event probability, error probability)."""
    slices = sys.phase_slice_count
    xu, wu = np.polynomial.legendre.leggauss(opts.legendre_points)
    u = xu * np.pi / slices
    wu = wu / wu.sum()
    if variance > 0:
        xg, wg = np.polynomial.hermite_e.hermegauss(opts.hermite_points)
        g = xg * np.sqrt(variance)
        wg = wg / wg.sum()
    else:
        g, wg = np.zeros(1), np.ones(1)
    delta = (u[:, None] + g[None, :]).ravel()
    w = (wu[:, None] * wg[None, :]).ravel()
    d0, d1, both = _pattern_probs(a, b, delta, sys.dark_count_rate)
    e = sys.misalignment_phase_slice
    # opposite-slice windows mirror equal-slice ones, so average over delta only
    if opts.click_rule == "at_least_one":
        eff = d0 + d1 + both
        err = (1 - e) * (d1 + 0.5 * both) + e * (d0 + 0.5 * both)
    else:
        eff = d0 + d1
        err = (1 - e) * d1 + e * d0
    return float(w @ eff), float(w @ err)


def sns_expected_tally(
    params: ProtocolParams,
    sys: SystemParams,
    fiber: FiberSpec,
    n_windows: float | None = None,
    drift: DriftConfig | None = None,
    opts: SnsOptions = SnsOptions(),
) -> TallySheet:
    """Expected tally over ``n_windows`` (defaults to the scenario's N)."""
    if params.kind is not ProtocolKind.SNS:
        raise ValueError("SNS tally requested for a non-SNS scenario")
    n = params.total_pulses if n_windows is None else float(n_windows)
    variance = phase_noise_variance(sys, opts, drift)
    accept = 2.0 / sys.phase_slice_count
    cells: dict[str, Cell] = {}
    for c in cell_specs(params, sys, fiber):
        if c.post_selected:
            eff, err = x_cell_expectation(c.a, c.b, sys, variance, opts)
            sent = n * c.prob * accept
            new = Cell(sent, sent * eff, sent * err)
        else:
            sent = n * c.prob
            eff = float(effective_probability_uniform(c.a, c.b, sys.dark_count_rate, opts.click_rule))
            errors = sent * eff if c.key in ("mu-mu", "0-0") else 0.0
            new = Cell(sent, sent * eff, errors)
        cells[c.key] = cells.get(c.key, Cell()) + new
    return TallySheet(ProtocolKind.SNS, n, cells, mode="analytic")


# -- Monte Carlo ----------------------------------------------------------------

def _sample_patterns(a, b, delta, p_d, rng):
    """Click pattern of each candidate given that at least one detector fired.

    Returns 0 (D0 only), 1 (D1 only) or 2 (both).
    """
    d0, d1, both = _pattern_probs(a, b, delta, p_d)
    total = d0 + d1 + both
    u = rng.random(delta.shape) * total
    return np.where(u < d0, 0, np.where(u < d0 + d1, 1, 2))


def _mc_chunk(
    specs: list[CellSpec],
    sys: SystemParams,
    n: int,
    variance: float,
    opts: SnsOptions,
    drift: DriftConfig | None,
    t_offset: float,
    seed: np.random.SeedSequence,
) -> TallySheet:
    rng = np.random.default_rng(seed)
    p_d = sys.dark_count_rate
    slices = sys.phase_slice_count
    probs = np.array([c.prob for c in specs])
    counts = rng.multinomial(n, probs / probs.sum())
    duration = n / sys.repetition_rate
    cells: dict[str, Cell] = {}
    ev_a, ev_b = [], []
    for c, n_cell in zip(specs, counts):
        sent = int(n_cell)
        if c.post_selected:
            sent = int(rng.binomial(n_cell, 2.0 / slices))
        q_any = float(-np.expm1(2.0 * np.log1p(-p_d) - (c.a + c.b)))
        k = int(rng.binomial(sent, q_any))
        errors = 0
        if c.post_selected:
            opposite = rng.random(k) < 0.5
            if drift is not None and drift.channel_drift_rate_std > 0:
                times = np.sort(rng.uniform(0.0, duration, k)) + t_offset
                chan = wiener_paths(drift.channel_drift_rate_std, times * 1e3, rng)
                u = wrap_phase(chan - TWO_PI * np.round(chan * slices / TWO_PI) / slices)
                u = np.atleast_1d(u)
            else:
                u = rng.uniform(-np.pi / slices, np.pi / slices, k)
            g = np.sqrt(variance) * rng.standard_normal(k)
            flip = rng.random(k) < sys.misalignment_phase_slice
            delta = np.pi * (opposite ^ flip) + u + g
            pattern = _sample_patterns(c.a, c.b, delta, p_d, rng)
            # outcomes are judged against the announced (unflipped) relation
            expected = opposite.astype(int)
            if opts.click_rule == "at_least_one":
                eff = np.ones(k, bool)
                wrong = np.where(pattern == 2, rng.random(k) < 0.5, pattern != expected)
            else:
                eff = pattern < 2
                wrong = eff & (pattern != expected)
            detected = int(eff.sum())
            errors = int(wrong.sum())
        else:
            delta = rng.uniform(0.0, TWO_PI, k)
            pattern = _sample_patterns(c.a, c.b, delta, p_d, rng)
            eff = pattern < 2 if opts.click_rule == "exactly_one" else np.ones(k, bool)
            detected = int(eff.sum())
            if c.key in ("mu-mu", "0-0"):
                errors = detected
            if opts.record_events and c.alice in _Z_STATES and c.bob in _Z_STATES:
                ev_a.append(np.full(detected, c.alice == "mu"))
                ev_b.append(np.full(detected, c.bob == "mu"))
        cells[c.key] = cells.get(c.key, Cell()) + Cell(sent, detected, errors)
    events = None
    if opts.record_events:
        a = np.concatenate(ev_a) if ev_a else np.zeros(0, bool)
        b = np.concatenate(ev_b) if ev_b else np.zeros(0, bool)
        order = rng.permutation(a.size)
        events = ZEvents(a[order], b[order])
    return TallySheet(ProtocolKind.SNS, n, cells, mode="monte_carlo", z_events=events)


def _chunks(n_windows: int) -> list[int]:
    full, rest = divmod(int(n_windows), CHUNK_WINDOWS)
    return [CHUNK_WINDOWS] * full + ([rest] if rest else [])


def run_sns_batch(
    params: ProtocolParams,
    sys: SystemParams,
    fiber: FiberSpec,
    drift: DriftConfig | None,
    n_windows: int,
    rng: np.random.Generator,
    opts: SnsOptions = SnsOptions(),
    threads: int = 1,
    t_offset: float = 0.0,
) -> TallySheet:
    """Monte Carlo tally of ``n_windows`` windows.

    Sampling is exact but hierarchical: window counts per cell are
    multinomial, windows with any click are thinned binomially (the
    any-click probability does not depend on the phase), and only those
    candidates get a phase and a click pattern.
    """
    if params.kind is not ProtocolKind.SNS:
        raise ValueError("SNS batch requested for a non-SNS scenario")
    n_windows = int(n_windows)
    if n_windows < 1:
        raise ValueError("n_windows must be >= 1")
    specs = cell_specs(params, sys, fiber)
    variance = phase_noise_variance(sys, opts, drift)
    sizes = _chunks(n_windows)
    seeds = np.random.SeedSequence(int(rng.integers(2**63))).spawn(len(sizes))
    offsets = t_offset + np.concatenate([[0], np.cumsum(sizes)[:-1]]) / sys.repetition_rate

    def work(i: int) -> TallySheet:
        return _mc_chunk(specs, sys, sizes[i], variance, opts, drift, offsets[i], seeds[i])

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(i) for i in range(len(sizes))]
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out


# -- sifting and AOPP -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SiftedKey:
    alice: np.ndarray
    bob: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.alice, dtype=np.uint8)
        b = np.asarray(self.bob, dtype=np.uint8)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("key views must be 1-D and of equal length")
        object.__setattr__(self, "alice", a)
        object.__setattr__(self, "bob", b)

    @property
    def n_t(self) -> int:
        return int(self.alice.size)

    @property
    def error_rate(self) -> float:
        if self.n_t == 0:
            return 0.0
        return float(np.count_nonzero(self.alice != self.bob)) / self.n_t


def sns_z_bits(alice_sent: np.ndarray, bob_sent: np.ndarray) -> SiftedKey:
    """Alice's bit is 1 when she sends; Bob's bit is 0 when he sends."""
    alice_sent = np.asarray(alice_sent, bool)
    bob_sent = np.asarray(bob_sent, bool)
    return SiftedKey(alice_sent.astype(np.uint8), (~bob_sent).astype(np.uint8))


def sift_sns_z(tally: TallySheet, events: ZEvents | None = None) -> SiftedKey:
    """Pre-AOPP Z key from the recorded effective signal-window events."""
    events = tally.z_events if events is None else events
    if events is None:
        raise ValueError("tally carries no per-event record; run with record_events")
    key = sns_z_bits(events.alice_sent, events.bob_sent)
    if key.n_t == 0:
        logger.warning("empty sifted key")
    return key


def sns_z_error_rate(tally: TallySheet) -> float:
    """Pre-AOPP E_Z from the Z cell counts: (mu-mu + 0-0) over all four Z cells."""
    z = [tally.detected(k) for k in ("mu-mu", "mu-0", "0-mu", "0-0")]
    total = sum(z)
    if total <= 0:
        return 0.0
    return (z[0] + z[3]) / total


def aopp_pair(key: SiftedKey, rng: np.random.Generator) -> SiftedKey:
    """Actively odd-parity pairing.

    Bob pairs each of his 0 bits with a distinct 1 bit at random (odd
    parity by construction) and announces the pairs. Alice keeps a pair
    iff her two bits also have odd parity. The first bit of every kept pair
    survives.
    """
    if key.n_t < 2:
        raise ValueError("AOPP needs at least two bits")
    zeros = np.flatnonzero(key.bob == 0)
    ones = np.flatnonzero(key.bob == 1)
    zeros = rng.permutation(zeros)
    ones = rng.permutation(ones)
    m = min(zeros.size, ones.size)
    first, second = zeros[:m], ones[:m]
    # randomize which member is kept so Bob's surviving bit is not fixed
    swap = rng.random(m) < 0.5
    first, second = np.where(swap, second, first), np.where(swap, first, second)
    keep = (key.alice[first] ^ key.alice[second]) == 1
    return SiftedKey(key.alice[first[keep]], key.bob[first[keep]])


@dataclass(frozen=True)
class AoppStats:
    """Pre- and post-AOPP expected statistics from Z cell counts."""

    n_pairs: float
    n_t: float
    e_z: float
    e_z_before: float
    n1_before: float
    n1_after: float
    bob0: float
    bob1: float
    e_bob0: float
    e_bob1: float


def aopp_expected(tally: TallySheet, n1_before: float = 0.0) -> AoppStats:
    """Expected AOPP outcome from cell counts.

    Bob-0 bits come from ``mu-mu`` (error) and ``0-mu``; Bob-1 bits from
    ``mu-0`` and ``0-0`` (error). ``n1_before`` untagged single-photon bits
    are split evenly between ``mu-0`` and ``0-mu``; an untagged survivor
    needs both paired bits to be untagged.
    """
    mm, m0, om, oo = (tally.detected(k) for k in ("mu-mu", "mu-0", "0-mu", "0-0"))
    bob0 = mm + om
    bob1 = m0 + oo
    if bob0 <= 0 or bob1 <= 0:
        return AoppStats(0, 0, 0, sns_z_error_rate(tally), n1_before, 0, bob0, bob1, 0, 0)
    e0 = mm / bob0
    e1 = oo / bob1
    pairs = min(bob0, bob1)
    keep = (1 - e0) * (1 - e1) + e0 * e1
    half = 0.5 * n1_before
    n1_after = pairs * min(half / bob0, 1.0) * min(half / bob1, 1.0)
    return AoppStats(
        n_pairs=pairs,
        n_t=pairs * keep,
        e_z=e0 * e1 / keep if keep > 0 else 0.0,
        e_z_before=sns_z_error_rate(tally),
        n1_before=n1_before,
        n1_after=n1_after,
        bob0=bob0,
        bob1=bob1,
        e_bob0=e0,
        e_bob1=e1,
    )
