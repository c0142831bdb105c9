"""Tally sheets: per source-pair counts in the row layout of the count tables."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from ..params import ProtocolKind

_GREEK = {"mu": "μ", "nu": "ν", "omega": "ω", "o": "o", "0": "0"}

SNS_CELLS = (
    "mu-mu", "mu-0", "0-mu", "0-0",
    "nu-nu", "nu-o", "o-nu",
    "omega-omega", "omega-o", "o-omega",
    "o-o",
)
MDI_CELLS = (
    "mu-mu", "mu-o", "o-mu",
    "nu-nu", "nu-o", "o-nu",
    "omega-omega", "omega-o", "o-omega",
    "o-o",
)
#: X-basis cells that carry an error count (post-selected in SNS).
SNS_X_CELLS = ("nu-nu", "omega-omega")
MDI_ERROR_CELLS = ("mu-mu", "nu-nu", "omega-omega")
OTHER = "other"


def cell_label(key: str) -> str:
    """Row label for a cell key, e.g. ``"mu-0"`` -> ``"Detected μ0"``."""
    a, b = key.split("-")
    return f"Detected {_GREEK[a]}{_GREEK[b]}"


def qber_label(key: str) -> str:
    a, b = key.split("-")
    return f"QBER of {_GREEK[a]}{_GREEK[b]}"


def cells_for(kind: ProtocolKind) -> tuple[str, ...]:
    return SNS_CELLS if ProtocolKind(kind) is ProtocolKind.SNS else MDI_CELLS


@dataclass(frozen=True)
class Cell:
    """``sent`` windows, ``detected`` effective events and ``errors`` among them.

    Analytic tallies hold expected (non-integer) values.
    """

    sent: float = 0.0
    detected: float = 0.0
    errors: float = 0.0

    def __post_init__(self) -> None:
        if min(self.sent, self.detected, self.errors) < 0:
            raise ValueError("cell counts must be nonnegative")
        if self.errors > self.detected * (1 + 1e-12) + 1e-12:
            raise ValueError("errors exceed detected events")

    def __add__(self, other: Cell) -> Cell:
        return Cell(
            self.sent + other.sent, self.detected + other.detected, self.errors + other.errors
        )

    @property
    def gain(self) -> float:
        return self.detected / self.sent if self.sent > 0 else 0.0

    @property
    def qber(self) -> float:
        return self.errors / self.detected if self.detected > 0 else 0.0


@dataclass(frozen=True)
class ZEvents:
    """Sending choices of the effective SNS signal-window events (Monte Carlo only)."""

    alice_sent: np.ndarray
    bob_sent: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.alice_sent, dtype=bool)
        b = np.asarray(self.bob_sent, dtype=bool)
        if a.shape != b.shape:
            raise ValueError("event arrays must have equal length")
        object.__setattr__(self, "alice_sent", a)
        object.__setattr__(self, "bob_sent", b)

    def __len__(self) -> int:
        return int(self.alice_sent.size)

    @classmethod
    def concat(cls, items: Iterable[ZEvents]) -> ZEvents:
        items = list(items)
        if not items:
            return cls(np.zeros(0, bool), np.zeros(0, bool))
        return cls(
            np.concatenate([e.alice_sent for e in items]),
            np.concatenate([e.bob_sent for e in items]),
        )


@dataclass(frozen=True)
class TallySheet:
    kind: ProtocolKind
    windows: float
    cells: Mapping[str, Cell]
    mode: str = "analytic"
    z_events: ZEvents | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ProtocolKind(self.kind))
        expected = set(cells_for(self.kind)) | {OTHER}
        unknown = set(self.cells) - expected
        if unknown:
            raise ValueError(f"unknown cells for {self.kind.value}: {sorted(unknown)}")
        full = {k: self.cells.get(k, Cell()) for k in (*cells_for(self.kind), OTHER)}
        object.__setattr__(self, "cells", full)

    def __getitem__(self, key: str) -> Cell:
        return self.cells[key]

    def detected(self, key: str) -> float:
        return self.cells[key].detected

    @property
    def total_effective(self) -> float:
        return float(sum(c.detected for c in self.cells.values()))

    def merge(self, other: TallySheet) -> TallySheet:
        if other.kind is not self.kind:
            raise ValueError("cannot merge tallies of different protocols")
        cells = {k: self.cells[k] + other.cells[k] for k in self.cells}
        events = None
        if self.z_events is not None and other.z_events is not None:
            events = ZEvents.concat([self.z_events, other.z_events])
        return dataclasses.replace(
            self, windows=self.windows + other.windows, cells=cells, z_events=events
        )

    def scaled(self, factor: float) -> TallySheet:
        """Expected tally for ``factor`` times as many windows (analytic tallies)."""
        cells = {
            k: Cell(c.sent * factor, c.detected * factor, c.errors * factor)
            for k, c in self.cells.items()
        }
        return dataclasses.replace(self, windows=self.windows * factor, cells=cells, z_events=None)

    def qbers(self) -> dict[str, float]:
        keys = SNS_X_CELLS if self.kind is ProtocolKind.SNS else MDI_ERROR_CELLS
        return {k: self.cells[k].qber for k in keys}

    def rows(self) -> list[tuple[str, float]]:
        """(label, value) rows in table order: detections then QBERs."""
        out = [(cell_label(k), self.cells[k].detected) for k in cells_for(self.kind)]
        out += [(qber_label(k), q) for k, q in self.qbers().items()]
        return out

    def to_records(self) -> dict[str, object]:
        return {
            "protocol": self.kind.value,
            "mode": self.mode,
            "windows": self.windows,
            "cells": {
                k: {"label": cell_label(k) if k != OTHER else OTHER, **dataclasses.asdict(c)}
                for k, c in self.cells.items()
            },
            "qber": self.qbers(),
        }

    @classmethod
    def from_records(cls, rec: Mapping[str, object]) -> TallySheet:
        cells = {
            k: Cell(float(v["sent"]), float(v["detected"]), float(v["errors"]))
            for k, v in rec["cells"].items()
        }
        return cls(ProtocolKind(rec["protocol"]), float(rec["windows"]), cells, str(rec["mode"]))
