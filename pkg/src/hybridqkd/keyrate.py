"""Decoy-state bounds, finite-size corrections and secure key rates.

Yields are written as ``S_x = exp(x) * Q_x`` where ``Q_x`` is the gain of
total (Alice + Bob) intensity ``x``. Finite-size mode replaces each
observed count by its Chernoff bound on the expected value in the
direction that loosens the key-rate bound.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .params import (
    FiberSpec,
    ProtocolKind,
    ProtocolParams,
    Scenario,
    SystemParams,
    channel_transmittance,
    scenario_from_preset,
)
from .protocol.mdi import mdi_expected_tally
from .protocol.sns import aopp_expected, sns_expected_tally
from .protocol.tally import TallySheet

logger = logging.getLogger(__name__)


def binary_entropy(x):
    """H(x) in bits; H(0) = H(1) = 0."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError("binary entropy needs x in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -arr * np.log2(arr) - (1 - arr) * np.log2(1 - arr)
    h = np.where((arr == 0) | (arr == 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def plob_bound(eta: float) -> float:
    """Repeaterless capacity ``-log2(1 - eta)``; ``inf`` at ``eta = 1``."""
    if not 0 <= eta <= 1:
        raise ValueError("transmittance must lie in [0, 1]")
    if eta == 1:
        return math.inf
    return -math.log1p(-eta) / math.log(2)


# -- Chernoff ---------------------------------------------------------------

@dataclass(frozen=True)
class ChernoffInterval:
    observed: float
    lower: float
    upper: float
    failure_probability: float

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)


def _chernoff_gap(expected: float, observed: float) -> float:
    # exponent of the multiplicative Chernoff tail for either direction
    if observed == 0:
        return expected
    return expected - observed + observed * math.log(observed / expected)


def chernoff_bounds(observed: float, failure_probability: float = 1e-10) -> ChernoffInterval:
    """Bounds on the expected value of a Poisson-like count from one observation.

    Each side inverts the multiplicative Chernoff tail at
    ``failure_probability / 2``.
    """
    if observed < 0:
        raise ValueError("observed count must be >= 0")
    if not 0 < failure_probability < 1:
        raise ValueError("failure probability must lie in (0, 1)")
    target = math.log(2.0 / failure_probability)
    x = float(observed)
    if x == 0:
        return ChernoffInterval(0.0, 0.0, target, failure_probability)
    spread = math.sqrt(2.0 * x * target) + 2.0 * target
    hi = x + spread
    while _chernoff_gap(hi, x) < target:
        hi += spread
    upper = brentq(lambda e: _chernoff_gap(e, x) - target, x, hi, xtol=1e-12 * hi, rtol=1e-14)
    if _chernoff_gap(1e-300, x) <= target:
        lower = 0.0
    else:
        lo = max(x - spread, x * 1e-300)
        while lo > 0 and _chernoff_gap(lo, x) < target:
            lo *= 0.5
        lower = brentq(lambda e: _chernoff_gap(e, x) - target, lo, x, xtol=1e-12 * x, rtol=1e-14)
    return ChernoffInterval(x, lower, upper, failure_probability)


def finite_size_penalty(failure_probability: float = 1e-10) -> float:
    """Composable log terms (bits): ``2 log2(2/eps) + 4 log2(1/(sqrt(2) eps))``."""
    eps = failure_probability
    return 2 * math.log2(2 / eps) + 4 * math.log2(1 / (math.sqrt(2) * eps))


class _Counts:
    """Gain lookups with optional Chernoff widening."""

    def __init__(self, tally: TallySheet, finite: bool, eps: float) -> None:
        self.tally = tally
        self.finite = finite
        self.eps = eps

    def _bound(self, value: float, side: str) -> float:
        if not self.finite or side == "mid":
            return value
        iv = chernoff_bounds(value, self.eps)
        return iv.lower if side == "lo" else iv.upper

    def gain(self, key: str, side: str = "mid") -> float:
        c = self.tally[key]
        if c.sent <= 0:
            return 0.0
        return self._bound(c.detected, side) / c.sent

    def error_gain(self, key: str, side: str = "mid") -> float:
        c = self.tally[key]
        if c.sent <= 0:
            return 0.0
        return self._bound(c.errors, side) / c.sent

    def pair_gain(self, k1: str, k2: str, side: str = "mid") -> float:
        """Average gain of two mirror cells, bounding their summed count."""
        c1, c2 = self.tally[k1], self.tally[k2]
        sent = c1.sent + c2.sent
        if sent <= 0:
            return 0.0
        return self._bound(c1.detected + c2.detected, side) / sent


# -- reports -------------------------------------------------------------------

@dataclass(frozen=True)
class KeyRateReport:
    protocol: str
    n_t: float
    e_z: float
    n11: float
    e_ph: float
    r_per_pulse: float
    r_bps: float
    plob_per_pulse: float
    finite_size: bool
    n: float
    infeasible: bool = False
    details: dict = field(default_factory=dict)

    @property
    def exceeds_plob(self) -> bool:
        return self.r_per_pulse > self.plob_per_pulse

    def to_records(self) -> dict:
        rec = dataclasses.asdict(self)
        rec["exceeds_plob"] = self.exceeds_plob
        return rec


def _report(protocol, n_t, e_z, n11, e_ph, numerator, sys, n, eta, finite, infeasible, details):
    rate = max(numerator, 0.0) / n if not infeasible else 0.0
    return KeyRateReport(
        protocol=protocol,
        n_t=float(n_t),
        e_z=float(e_z),
        n11=float(n11),
        e_ph=float(e_ph),
        r_per_pulse=float(rate),
        r_bps=float(rate * sys.repetition_rate),
        plob_per_pulse=plob_bound(eta) if eta is not None else math.nan,
        finite_size=finite,
        n=float(n),
        infeasible=bool(infeasible or numerator <= 0),
        details=details,
    )


# -- SNS -------------------------------------------------------------------------

@dataclass(frozen=True)
class DecoyBounds:
    s1: float
    e_ph: float
    n1: float
    infeasible: bool


def sns_decoy_bounds(
    tally: TallySheet,
    params: ProtocolParams,
    finite: bool = False,
    failure_probability: float = 1e-10,
) -> DecoyBounds:
    """Single-photon yield lower bound, phase-error upper bound and untagged count.

    Decoy intensities ``nu`` and ``omega`` are paired with the weak "vacuum"
    pulse ``o``; effective yields use the total intensity ``x + o``.
    """
    if tally.kind is not ProtocolKind.SNS:
        raise ValueError("SNS decoy bounds need an SNS tally")
    q = _Counts(tally, finite, failure_probability)
    o, w, v, mu = params.vac, params.omega, params.nu, params.mu
    x0, x1, x2 = 2 * o, w + o, v + o
    s_x1 = math.exp(x1) * q.pair_gain("omega-o", "o-omega", "lo")
    s_x2 = math.exp(x2) * q.pair_gain("nu-o", "o-nu", "hi")
    s_x0_hi = math.exp(x0) * q.gain("o-o", "hi")
    s_x0_lo = math.exp(x0) * q.gain("o-o", "lo")
    c1 = x1 * (x2**2 - x0**2) - x2 * (x1**2 - x0**2) - x0 * (x2**2 - x1**2)
    s1 = ((x2**2 - x0**2) * s_x1 - (x1**2 - x0**2) * s_x2 - (x2**2 - x1**2) * s_x0_hi) / c1
    if s1 <= 0:
        return DecoyBounds(0.0, 0.5, 0.0, True)
    t_ww = q.error_gain("omega-omega", "hi")
    e_ph = (t_ww - 0.5 * math.exp(-2 * w) * s_x0_lo) / (2 * w * math.exp(-2 * w) * s1)
    e_ph = max(e_ph, 0.0)
    sent_z1 = tally["mu-0"].sent + tally["0-mu"].sent
    n1 = sent_z1 * mu * math.exp(-mu) * s1
    if finite:
        n1 = chernoff_bounds(n1, failure_probability).lower
    return DecoyBounds(s1, min(e_ph, 1.0), n1, e_ph >= 0.5)


@dataclass(frozen=True)
class AoppInputs:
    """Post-AOPP statistics, either simulated or injected from a table."""

    n_t: float
    e_z: float
    n11: float
    e_ph: float


def sns_aopp_keyrate(
    post: AoppInputs,
    sys: SystemParams,
    n: float,
    finite: bool = True,
    eta: float | None = None,
    penalty: Callable[[float], float] = finite_size_penalty,
    pre: dict | None = None,
) -> KeyRateReport:
    """``R = [n11 (1 - H(e_ph)) - f n_t H(E_Z) - Delta] / N`` on post-AOPP values."""
    e_ph = min(max(post.e_ph, 0.0), 0.5)
    delta = penalty(sys.failure_probability) if finite else 0.0
    numerator = (
        post.n11 * (1 - binary_entropy(e_ph))
        - sys.error_correction_inefficiency * post.n_t * binary_entropy(min(post.e_z, 1.0))
        - delta
    )
    return _report(
        "SNS", post.n_t, post.e_z, post.n11, post.e_ph, numerator, sys, n, eta,
        finite, post.e_ph >= 0.5, {"pre_aopp": pre or {}, "delta_fs": delta},
    )


def sns_keyrate_from_tally(
    tally: TallySheet,
    params: ProtocolParams,
    sys: SystemParams,
    finite: bool = True,
    eta: float | None = None,
) -> KeyRateReport:
    """Full SNS chain: decoy bounds, expected AOPP, then the post-AOPP rate."""
    eps = sys.failure_probability
    bounds = sns_decoy_bounds(tally, params, finite, eps)
    pre = {"n11": bounds.n1, "e_ph": bounds.e_ph, "s1": bounds.s1}
    if bounds.infeasible:
        return _report("SNS", 0, 0, 0, 0.5, 0.0, sys, tally.windows, eta, finite, True, pre)
    ao = aopp_expected(tally, bounds.n1)
    pre["e_z"] = ao.e_z_before
    e = bounds.e_ph
    e_after = 2 * e * (1 - e)
    if finite and ao.n1_after > 0:
        e_after = chernoff_bounds(ao.n1_after * e_after, eps).upper / ao.n1_after
    post = AoppInputs(ao.n_t, ao.e_z, ao.n1_after, min(e_after, 0.5))
    return sns_aopp_keyrate(post, sys, tally.windows, finite, eta, pre=pre)


# -- MDI -------------------------------------------------------------------------

def mdi_s11_lower(h1: float, h2: float, x1: float, x2: float, v: float) -> float:
    """Two-decoy lower bound on the single-photon-pair yield from the H combinations."""
    return ((x2 + v) * h1 / (x1 - v) ** 2 - (x1 + v) * h2 / (x2 - v) ** 2) / (x2 - x1)


def mdi_h(q_xx: float, q_xv: float, q_vx: float, q_vv: float, x: float, v: float) -> float:
    """``H_x = S_xx - S_xv - S_vx + S_vv``; removes every term with a vacuum side."""
    return (
        math.exp(2 * x) * q_xx
        - math.exp(x + v) * (q_xv + q_vx)
        + math.exp(2 * v) * q_vv
    )


@dataclass(frozen=True)
class MdiBounds:
    s11: float
    e11: float
    n11: float
    scan_point: tuple[float, float]


def mdi_double_scanning_bounds(
    tally: TallySheet,
    params: ProtocolParams,
    sys: SystemParams,
    finite: bool = True,
    grid: int = 11,
) -> tuple[MdiBounds, float]:
    """Scan the shared ``omega-o`` and ``o-o`` expectations inside their intervals.

    Both enter the yield bound and the phase-error bound with opposite
    effects; bounding them once per point and keeping the worst key rate
    avoids counting their fluctuation twice. Returns the worst-case bounds
    and their secret-key numerator ``n11 (1 - H(e11))``.
    """
    eps = sys.failure_probability
    q = _Counts(tally, finite, eps)
    v, x1, x2, mu = params.vac, params.omega, params.nu, params.mu
    wo = tally["omega-o"].detected + tally["o-omega"].detected
    wo_sent = tally["omega-o"].sent + tally["o-omega"].sent
    oo = tally["o-o"].detected
    oo_sent = tally["o-o"].sent
    if wo_sent <= 0 or oo_sent <= 0 or tally["omega-omega"].sent <= 0:
        return MdiBounds(0.0, 0.5, 0.0, (0.0, 0.0)), 0.0
    if finite:
        iv_wo = chernoff_bounds(wo, eps)
        iv_oo = chernoff_bounds(oo, eps)
        wo_grid = np.linspace(iv_wo.lower, iv_wo.upper, grid)
        oo_grid = np.linspace(iv_oo.lower, iv_oo.upper, grid)
    else:
        wo_grid, oo_grid = np.array([wo]), np.array([oo])
    q_ww_lo = q.gain("omega-omega", "lo")
    t_ww_hi = q.error_gain("omega-omega", "hi")
    q_vo_lo = q.pair_gain("nu-o", "o-nu", "lo")
    h2 = mdi_h(q.gain("nu-nu", "hi"), q_vo_lo, q_vo_lo, 0.0, x2, v)
    n_z = tally.windows * params.p_mu**2 * mu**2 * math.exp(-2 * mu)
    worst: tuple[float, MdiBounds] | None = None
    for wo_e, oo_e in itertools.product(wo_grid, oo_grid):
        q_wo = wo_e / wo_sent
        q_oo = oo_e / oo_sent
        h1 = mdi_h(q_ww_lo, q_wo, q_wo, q_oo, x1, v)
        h2_pt = h2 + math.exp(2 * v) * q_oo
        s11 = mdi_s11_lower(h1, h2_pt, x1, x2, v)
        if s11 <= 0:
            cand = MdiBounds(0.0, 0.5, 0.0, (wo_e, oo_e))
            value = 0.0
        else:
            vac_part = 2 * math.exp(x1 + v) * q_wo - math.exp(2 * v) * q_oo
            e11 = (math.exp(2 * x1) * t_ww_hi - 0.5 * vac_part) / (x1**2 * s11)
            e11 = min(max(e11, 0.0), 0.5)
            n11 = n_z * s11
            if finite:
                n11 = chernoff_bounds(n11, eps).lower
            value = n11 * (1 - binary_entropy(e11))
            cand = MdiBounds(s11, e11, n11, (wo_e, oo_e))
        if worst is None or value < worst[0]:
            worst = (value, cand)
    return worst[1], worst[0]


def mdi_double_scanning_keyrate(
    tally: TallySheet,
    params: ProtocolParams,
    sys: SystemParams,
    finite: bool = True,
    eta: float | None = None,
    grid: int = 11,
) -> KeyRateReport:
    """``R = [n11 (1 - H(e11)) - f n_mumu H(E_mumu) - Delta] / N``."""
    if tally.kind is not ProtocolKind.MDI:
        raise ValueError("MDI key rate needs an MDI tally")
    bounds, value = mdi_double_scanning_bounds(tally, params, sys, finite, grid)
    zz = tally["mu-mu"]
    return mdi_keyrate_from_values(
        bounds.n11, bounds.e11, zz.detected, zz.qber, sys, tally.windows, finite, eta,
        infeasible=bounds.s11 <= 0,
        details={"s11": bounds.s11, "scan_point": list(bounds.scan_point)},
    )


def mdi_keyrate_from_values(
    n11: float,
    e_ph: float,
    n_mumu: float,
    e_mumu: float,
    sys: SystemParams,
    n: float,
    finite: bool = True,
    eta: float | None = None,
    penalty: Callable[[float], float] = finite_size_penalty,
    infeasible: bool = False,
    details: dict | None = None,
) -> KeyRateReport:
    delta = penalty(sys.failure_probability) if finite else 0.0
    e = min(max(e_ph, 0.0), 0.5)
    numerator = (
        n11 * (1 - binary_entropy(e))
        - sys.error_correction_inefficiency * n_mumu * binary_entropy(min(e_mumu, 1.0))
        - delta
    )
    d = dict(details or {})
    d["delta_fs"] = delta
    return _report(
        "MDI", n_mumu, e_mumu, n11, e_ph, numerator, sys, n, eta, finite,
        infeasible or e_ph >= 0.5, d,
    )


# -- scenario level ----------------------------------------------------------------

def scenario_keyrate(scenario: Scenario, finite: bool = True) -> KeyRateReport:
    """Analytic tally followed by the matching key-rate chain."""
    sys, params, fiber = scenario.as_tuple()
    eta = channel_transmittance(fiber)
    if params.kind is ProtocolKind.SNS:
        tally = sns_expected_tally(params, sys, fiber)
        return sns_keyrate_from_tally(tally, params, sys, finite, eta)
    tally = mdi_expected_tally(params, sys, fiber)
    return mdi_double_scanning_keyrate(tally, params, sys, finite, eta)


@dataclass(frozen=True)
class SweepRow:
    scenario: str
    protocol: str
    distance_km: float
    loss_db: float
    r_per_pulse: float
    plob: float

    @property
    def exceeds_plob(self) -> bool:
        return self.r_per_pulse > self.plob


def rate_distance_sweep(
    scenarios: Iterable[Scenario | str],
    sys: SystemParams | None = None,
    finite: bool = True,
) -> list[SweepRow]:
    """Rate against distance with the PLOB bound at every point."""
    rows = []
    for sc in scenarios:
        if isinstance(sc, str):
            sc = scenario_from_preset(sc, sys)
        elif sys is not None:
            sc = dataclasses.replace(sc, system=sys)
        rep = scenario_keyrate(sc, finite)
        rows.append(
            SweepRow(
                sc.name,
                sc.protocol.kind.value,
                sc.fiber.total_length,
                sc.fiber.total_loss_db,
                rep.r_per_pulse,
                rep.plob_per_pulse,
            )
        )
    return rows


def fitted_loss_slope(loss_db: Sequence[float], rates: Sequence[float]) -> float:
    """|d log10 R / d loss| from a least-squares line."""
    loss = np.asarray(loss_db, float)
    r = np.asarray(rates, float)
    if loss.size < 2 or np.any(r <= 0):
        raise ValueError("need at least two positive rates")
    slope = np.polyfit(loss, np.log10(r), 1)[0]
    return float(abs(slope))
