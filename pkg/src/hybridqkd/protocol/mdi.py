"""Time-bin MDI pipeline with |psi-> projections.

Pulse layout per party (intensity ``x`` at the source, global phase
``theta`` uniformly random):

* Z window (``mu``): the whole pulse sits in the early (bit 0) or late
  (bit 1) bin.
* X window (``nu``, ``omega``): ``x/2`` in each bin, the late half shifted
  by ``pi * bit``.
* vacuum window (``o``): ``x/2`` in each bin with an independent random
  relative phase; no basis, no bit.

A |psi-> event is exactly one click in each bin, on opposite detectors.
Both Z and X bits are anti-correlated on |psi->, so equal bits count as
errors; the basis misalignment (``e_Z`` or ``e_X``) flips the outcome.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..optics import click_probabilities, interference_means
from ..params import FiberSpec, ProtocolKind, ProtocolParams, Side, SystemParams, arm_transmittance
from .tally import MDI_CELLS, MDI_ERROR_CELLS, OTHER, Cell, TallySheet
from .windows import state_table

TWO_PI = 2.0 * np.pi
CHUNK_WINDOWS = 50_000_000
_BASIS = {"mu": "Z", "nu": "X", "omega": "X", "o": None}


@dataclass(frozen=True)
class MdiCell:
    key: str
    alice: str
    bob: str
    prob: float
    x_a: float
    x_b: float


def mdi_cell_specs(params: ProtocolParams, sys: SystemParams, fiber: FiberSpec) -> list[MdiCell]:
    eta_a = arm_transmittance(fiber, Side.ALICE, sys)
    eta_b = arm_transmittance(fiber, Side.BOB, sys)
    table = state_table(params)
    out = []
    for sa, pa, xa in table:
        for sb, pb, xb in table:
            key = f"{sa}-{sb}"
            out.append(
                MdiCell(key if key in MDI_CELLS else OTHER, sa, sb, pa * pb, xa * eta_a, xb * eta_b)
            )
    return out


def _bins(state: str, x: float, bit, theta, rel):
    """(early intensity, early phase, late intensity, late phase) for one party."""
    basis = _BASIS[state]
    if basis == "Z":
        early = np.where(bit == 0, x, 0.0)
        return early, theta, x - early, theta
    if basis == "X":
        return 0.5 * x, theta, 0.5 * x, theta + np.pi * bit
    return 0.5 * x, theta, 0.5 * x, theta + rel


def _bin_patterns(a, pa, b, pb, p_d):
    n0, n1 = interference_means(a, b, pa - pb)
    c0, c1 = click_probabilities(n0, n1, p_d)
    return c0 * (1 - c1), (1 - c0) * c1, c0 * c1


def _misalignment(sys: SystemParams, cell: MdiCell) -> float:
    if cell.key == "mu-mu":
        return sys.misalignment_z
    return sys.misalignment_x_mdi


def psi_minus_probability(cell: MdiCell, sys: SystemParams, bit_a, bit_b, delta, rel_a, rel_b):
    """|psi-> probability for given bits and phases (broadcasting)."""
    ea, pea, la, pla = _bins(cell.alice, cell.x_a, bit_a, delta, rel_a)
    eb, peb, lb, plb = _bins(cell.bob, cell.x_b, bit_b, 0.0, rel_b)
    e0, e1, _ = _bin_patterns(ea, pea, eb, peb, sys.dark_count_rate)
    l0, l1, _ = _bin_patterns(la, pla, lb, plb, sys.dark_count_rate)
    return e0 * l1 + e1 * l0


def mdi_cell_expectation(
    cell: MdiCell, sys: SystemParams, phase_points: int = 64, rel_points: int = 16
) -> tuple[float, float]:
    """Per window: (|psi-> probability, error probability) averaged over bits and phases."""
    delta = np.arange(phase_points) * TWO_PI / phase_points
    rel = np.arange(rel_points) * TWO_PI / rel_points
    rel_a = rel if cell.alice == "o" else np.zeros(1)
    rel_b = rel if cell.bob == "o" else np.zeros(1)
    grid = np.meshgrid(delta, rel_a, rel_b, indexing="ij")
    e = _misalignment(sys, cell)
    eff = 0.0
    same = 0.0
    for bit_a in (0, 1):
        for bit_b in (0, 1):
            p = float(np.mean(psi_minus_probability(cell, sys, bit_a, bit_b, *grid))) / 4
            eff += p
            if bit_a == bit_b:
                same += p
    errors = (1 - e) * same + e * (eff - same)
    if _BASIS[cell.alice] is None or _BASIS[cell.bob] is None or cell.key == OTHER:
        errors = 0.0
    return eff, errors


def mdi_expected_tally(
    params: ProtocolParams, sys: SystemParams, fiber: FiberSpec, n_windows: float | None = None
) -> TallySheet:
    if params.kind is not ProtocolKind.MDI:
        raise ValueError("MDI tally requested for a non-MDI scenario")
    n = params.total_pulses if n_windows is None else float(n_windows)
    cells: dict[str, Cell] = {}
    for c in mdi_cell_specs(params, sys, fiber):
        eff, err = mdi_cell_expectation(c, sys)
        sent = n * c.prob
        errors = sent * err if c.key in MDI_ERROR_CELLS else 0.0
        cells[c.key] = cells.get(c.key, Cell()) + Cell(sent, sent * eff, errors)
    return TallySheet(ProtocolKind.MDI, n, cells, mode="analytic")


def _sample_bin(a, pa, b, pb, p_d, rng):
    """Pattern in one bin given at least one click: 0 D0 only, 1 D1 only, 2 both."""
    d0, d1, both = _bin_patterns(a, pa, b, pb, p_d)
    u = rng.random(np.shape(d0)) * (d0 + d1 + both)
    return np.where(u < d0, 0, np.where(u < d0 + d1, 1, 2))


def _mc_chunk(specs: list[MdiCell], sys: SystemParams, n: int, seed) -> TallySheet:
    rng = np.random.default_rng(seed)
    p_d = sys.dark_count_rate
    log_keep2 = 2.0 * np.log1p(-p_d)
    probs = np.array([c.prob for c in specs])
    counts = rng.multinomial(n, probs / probs.sum())
    cells: dict[str, Cell] = {}
    for c, n_cell in zip(specs, counts):
        # bin totals depend on the bits only in the Z basis, so split first
        bit_counts = rng.multinomial(n_cell, [0.25] * 4)
        detected = 0
        errors = 0
        for (bit_a, bit_b), m in zip(((0, 0), (0, 1), (1, 0), (1, 1)), bit_counts):
            ea, _, la, _ = _bins(c.alice, c.x_a, bit_a, 0.0, 0.0)
            eb, _, lb, _ = _bins(c.bob, c.x_b, bit_b, 0.0, 0.0)
            q = -np.expm1(log_keep2 - (ea + eb)) * -np.expm1(log_keep2 - (la + lb))
            k = int(rng.binomial(m, float(q)))
            if k == 0:
                continue
            delta = rng.uniform(0.0, TWO_PI, k)
            rel_a = rng.uniform(0.0, TWO_PI, k)
            rel_b = rng.uniform(0.0, TWO_PI, k)
            ea, pea, la, pla = _bins(c.alice, c.x_a, bit_a, delta, rel_a)
            eb, peb, lb, plb = _bins(c.bob, c.x_b, bit_b, 0.0, rel_b)
            early = _sample_bin(ea, pea, eb, peb, p_d, rng)
            late = _sample_bin(la, pla, lb, plb, p_d, rng)
            psi = (early < 2) & (late < 2) & (early != late)
            hits = int(psi.sum())
            detected += hits
            if c.key in MDI_ERROR_CELLS:
                flips = rng.random(hits) < _misalignment(sys, c)
                wrong = (bit_a == bit_b) ^ flips
                errors += int(wrong.sum())
        cells[c.key] = cells.get(c.key, Cell()) + Cell(int(n_cell), detected, errors)
    return TallySheet(ProtocolKind.MDI, n, cells, mode="monte_carlo")


def run_mdi_batch(
    params: ProtocolParams,
    sys: SystemParams,
    fiber: FiberSpec,
    n_windows: int,
    rng: np.random.Generator,
    threads: int = 1,
) -> TallySheet:
    """Monte Carlo MDI tally using exact binomial thinning on both-bin clicks."""
    if params.kind is not ProtocolKind.MDI:
        raise ValueError("MDI batch requested for a non-MDI scenario")
    n_windows = int(n_windows)
    if n_windows < 1:
        raise ValueError("n_windows must be >= 1")
    specs = mdi_cell_specs(params, sys, fiber)
    full, rest = divmod(n_windows, CHUNK_WINDOWS)
    sizes = [CHUNK_WINDOWS] * full + ([rest] if rest else [])
    seeds = np.random.SeedSequence(int(rng.integers(2**63))).spawn(len(sizes))

    def work(i: int) -> TallySheet:
        return _mc_chunk(specs, sys, sizes[i], seeds[i])

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(i) for i in range(len(sizes))]
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out
