"""Window-by-window reference sampler.

Slow but literal: every window draws both parties' choices, phases and
independent detector clicks. It shares no sampling code with the
hierarchical Monte Carlo and exists to cross-check it at small N.
"""

from __future__ import annotations

import numpy as np

from ..optics import interference_means, click_probabilities, sample_clicks
from ..params import FiberSpec, ProtocolKind, ProtocolParams, Side, SystemParams, arm_transmittance
from .tally import MDI_CELLS, MDI_ERROR_CELLS, OTHER, SNS_CELLS, SNS_X_CELLS, Cell, TallySheet
from .windows import state_table

TWO_PI = 2.0 * np.pi


def _draw_states(params: ProtocolParams, n: int, rng: np.random.Generator):
    table = state_table(params)
    names = np.array([s for s, _, _ in table])
    probs = np.array([p for _, p, _ in table])
    xs = np.array([x for _, _, x in table])
    ia = rng.choice(len(table), size=n, p=probs)
    ib = rng.choice(len(table), size=n, p=probs)
    return names[ia], names[ib], xs[ia], xs[ib]


def _tally(kind, n, keys, sent_mask, eff, err) -> TallySheet:
    cells = {}
    for key in np.unique(keys):
        sel = keys == key
        cells[str(key)] = Cell(
            float(np.count_nonzero(sel & sent_mask)),
            float(np.count_nonzero(sel & sent_mask & eff)),
            float(np.count_nonzero(sel & sent_mask & eff & err)),
        )
    return TallySheet(kind, n, cells, mode="direct")


def direct_sns(
    params: ProtocolParams, sys: SystemParams, fiber: FiberSpec, n: int, rng: np.random.Generator
) -> TallySheet:
    sa, sb, xa, xb = _draw_states(params, n, rng)
    slices = sys.phase_slice_count
    ka = rng.integers(slices, size=n)
    kb = rng.integers(slices, size=n)
    u = rng.uniform(-np.pi / slices, np.pi / slices, n)
    g = np.sqrt(sys.opll_residual_phase_variance) * rng.standard_normal(n)
    delta = TWO_PI * (ka - kb) / slices + u + g
    keys = np.char.add(np.char.add(sa, "-"), sb)
    keys = np.where(np.isin(keys, SNS_CELLS), keys, OTHER)
    x_cell = np.isin(keys, SNS_X_CELLS)
    rel = (ka - kb) % slices
    accepted = ~x_cell | (rel == 0) | (rel == slices // 2)
    flip = x_cell & (rng.random(n) < sys.misalignment_phase_slice)
    delta = delta + np.pi * flip
    a = xa * arm_transmittance(fiber, Side.ALICE, sys)
    b = xb * arm_transmittance(fiber, Side.BOB, sys)
    n0, n1 = interference_means(a, b, delta)
    p0, p1 = click_probabilities(n0, n1, sys.dark_count_rate)
    c0, c1 = sample_clicks(p0, p1, rng)
    eff = c0 != c1
    expected_d1 = rel == slices // 2
    err = np.where(x_cell, c1 != expected_d1, np.isin(keys, ("mu-mu", "0-0")))
    return _tally(ProtocolKind.SNS, n, keys, accepted, eff, err)


def direct_mdi(
    params: ProtocolParams, sys: SystemParams, fiber: FiberSpec, n: int, rng: np.random.Generator
) -> TallySheet:
    sa, sb, xa, xb = _draw_states(params, n, rng)
    eta_a = arm_transmittance(fiber, Side.ALICE, sys)
    eta_b = arm_transmittance(fiber, Side.BOB, sys)
    bit_a = rng.integers(2, size=n)
    bit_b = rng.integers(2, size=n)
    theta_a = rng.uniform(0, TWO_PI, n)
    theta_b = rng.uniform(0, TWO_PI, n)

    def layout(states, x, bits, theta):
        z = states == "mu"
        vac = states == "o"
        early = np.where(z, np.where(bits == 0, x, 0.0), 0.5 * x)
        late = np.where(z, x - early, 0.5 * x)
        late_phase = theta + np.where(vac, rng.uniform(0, TWO_PI, n), np.pi * bits * ~z)
        return early, theta, late, late_phase

    ea, pea, la, pla = layout(sa, xa * eta_a, bit_a, theta_a)
    eb, peb, lb, plb = layout(sb, xb * eta_b, bit_b, theta_b)
    clicks = []
    for a, pa, b, pb in ((ea, pea, eb, peb), (la, pla, lb, plb)):
        n0, n1 = interference_means(a, b, pa - pb)
        p0, p1 = click_probabilities(n0, n1, sys.dark_count_rate)
        clicks.append(sample_clicks(p0, p1, rng))
    (e0, e1), (l0, l1) = clicks
    psi = (e0 & ~e1 & l1 & ~l0) | (e1 & ~e0 & l0 & ~l1)
    keys = np.char.add(np.char.add(sa, "-"), sb)
    keys = np.where(np.isin(keys, MDI_CELLS), keys, OTHER)
    e_mis = np.where(keys == "mu-mu", sys.misalignment_z, sys.misalignment_x_mdi)
    flips = rng.random(n) < e_mis
    err = np.isin(keys, MDI_ERROR_CELLS) & ((bit_a == bit_b) ^ flips)
    return _tally(ProtocolKind.MDI, n, keys, np.ones(n, bool), psi, err)
