"""Per-window source choices of Alice and Bob."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..params import ProtocolKind, ProtocolParams, Side, SystemParams

TWO_PI = 2.0 * np.pi


class WindowKind(str, enum.Enum):
    SIGNAL = "signal"
    DECOY_NU = "decoy_nu"
    DECOY_OMEGA = "decoy_omega"
    VACUUM = "vacuum"


class Basis(str, enum.Enum):
    Z = "Z"
    X = "X"


_KIND_ORDER = (WindowKind.SIGNAL, WindowKind.DECOY_NU, WindowKind.DECOY_OMEGA, WindowKind.VACUUM)


@dataclass(frozen=True)
class WindowChoice:
    """One party's choices for one time window.

    SNS bits follow the sending convention: Alice's bit is 1 when she
    sends, Bob's bit is 0 when he sends. Decoy and vacuum windows carry bit 0.
    MDI Z windows put the pulse in the early (bit 0) or late (bit 1) bin.
    """

    party: Side
    window_kind: WindowKind
    sns_sending: bool | None
    mdi_basis: Basis | None
    bit: int
    phase_slice: int
    random_phase: float

    def __post_init__(self) -> None:
        if self.bit not in (0, 1):
            raise ValueError("bit must be 0 or 1")
        if self.sns_sending is not None and self.mdi_basis is not None:
            raise ValueError("a window is either SNS or MDI")
        if self.mdi_basis is not None and self.window_kind is WindowKind.VACUUM:
            raise ValueError("vacuum windows carry no basis")

    @property
    def state(self) -> str:
        """Cell key of the emitted state: ``mu``, ``0``, ``nu``, ``omega`` or ``o``."""
        if self.window_kind is WindowKind.SIGNAL:
            return "0" if self.sns_sending is False else "mu"
        return {
            WindowKind.DECOY_NU: "nu",
            WindowKind.DECOY_OMEGA: "omega",
            WindowKind.VACUUM: "o",
        }[self.window_kind]


def state_table(params: ProtocolParams) -> list[tuple[str, float, float]]:
    """``(state, probability, intensity)`` for every state one party can emit."""
    if params.kind is ProtocolKind.SNS:
        eps = params.epsilon
        rows = [
            ("mu", params.p_mu * eps, params.mu),
            ("0", params.p_mu * (1.0 - eps), 0.0),
        ]
    else:
        rows = [("mu", params.p_mu, params.mu)]
    rows += [
        ("nu", params.p_nu, params.nu),
        ("omega", params.p_omega, params.omega),
        ("o", params.p_vac, params.vac),
    ]
    total = sum(p for _, p, _ in rows)
    return [(s, p / total, x) for s, p, x in rows]


def draw_window(
    params: ProtocolParams,
    sys: SystemParams,
    rng: np.random.Generator,
    party: Side | str = Side.ALICE,
) -> WindowChoice:
    party = Side(party)
    probs = np.array([params.p_mu, params.p_nu, params.p_omega, params.p_vac])
    kind = _KIND_ORDER[int(rng.choice(4, p=probs / probs.sum()))]
    slices = sys.phase_slice_count
    if params.kind is ProtocolKind.SNS:
        # Decoy and vacuum windows always emit their (weak) pulse.
        sending = bool(rng.random() < params.epsilon) if kind is WindowKind.SIGNAL else True
        bit = 0
        if kind is WindowKind.SIGNAL:
            bit = int(sending) if party is Side.ALICE else int(not sending)
        k = int(rng.integers(1, slices + 1))
        return WindowChoice(
            party,
            kind,
            sns_sending=sending,
            mdi_basis=None,
            bit=bit,
            phase_slice=k,
            random_phase=TWO_PI * k / slices % TWO_PI,
        )
    basis = None
    if kind is WindowKind.SIGNAL:
        basis = Basis.Z
    elif kind is not WindowKind.VACUUM:
        basis = Basis.X
    phase = float(rng.uniform(0.0, TWO_PI))
    k = int(np.floor(phase * slices / TWO_PI)) + 1
    return WindowChoice(
        party,
        kind,
        sns_sending=None,
        mdi_basis=basis,
        bit=int(rng.integers(2)) if basis is not None else 0,
        phase_slice=k,
        random_phase=phase,
    )
