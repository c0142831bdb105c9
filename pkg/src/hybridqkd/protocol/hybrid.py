"""Hybrid sessions: SNS on the first windows, MDI on the rest, one shared link."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..compensation import CompensationConfig, duty_cycle
from ..drift import DriftConfig
from ..params import FiberSpec, ProtocolKind, ProtocolParams, SystemParams
from .mdi import mdi_expected_tally, run_mdi_batch
from .sns import SnsOptions, run_sns_batch, sns_expected_tally
from .tally import TallySheet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HybridLog:
    sns_windows: int
    mdi_windows: int
    calibrations: int
    duty_cycle: float


def run_hybrid_session(
    sns_params: ProtocolParams,
    mdi_params: ProtocolParams,
    sys: SystemParams,
    fiber: FiberSpec,
    total_windows: int,
    switch_point: int,
    seed: int = 0,
    drift: DriftConfig | None = None,
    mode: str = "monte_carlo",
    comp: CompensationConfig = CompensationConfig(),
    threads: int = 1,
) -> tuple[TallySheet, TallySheet, HybridLog]:
    """Run SNS for ``switch_point`` windows, then MDI for the remainder.

    Both stages share one drift clock: the MDI stage starts where the SNS
    stage stopped and the calibration schedule is not reset. Seeds are
    spawned per stage from ``seed``, so a stage reproduces the matching
    single-protocol run at the same spawned seed.
    """
    if sns_params.kind is not ProtocolKind.SNS or mdi_params.kind is not ProtocolKind.MDI:
        raise ValueError("hybrid sessions need one SNS and one MDI parameter set")
    total_windows = int(total_windows)
    switch_point = int(switch_point)
    if not 0 <= switch_point <= total_windows:
        raise ValueError("switch_point must lie within the session")
    n_sns = switch_point
    n_mdi = total_windows - switch_point
    sns_seed, mdi_seed = np.random.SeedSequence(seed).spawn(2)
    empty_sns = TallySheet(ProtocolKind.SNS, 0, {}, mode=mode)
    empty_mdi = TallySheet(ProtocolKind.MDI, 0, {}, mode=mode)
    if mode == "analytic":
        sns = sns_expected_tally(sns_params, sys, fiber, n_sns, drift) if n_sns else empty_sns
        mdi = mdi_expected_tally(mdi_params, sys, fiber, n_mdi) if n_mdi else empty_mdi
    elif mode == "monte_carlo":
        sns = empty_sns
        if n_sns:
            sns = run_sns_batch(
                sns_params, sys, fiber, drift, n_sns,
                np.random.default_rng(sns_seed), SnsOptions(), threads,
            )
        mdi = empty_mdi
        if n_mdi:
            mdi = run_mdi_batch(
                mdi_params, sys, fiber, n_mdi, np.random.default_rng(mdi_seed), threads
            )
    else:
        raise ValueError(f"unknown mode {mode!r}")
    elapsed = total_windows / sys.repetition_rate
    calibrations = int(np.floor(elapsed / comp.period)) + 1
    log = HybridLog(n_sns, n_mdi, calibrations, duty_cycle(comp))
    logger.info("hybrid session: %d calibrations over %.3f s", calibrations, elapsed)
    return sns, mdi, log
