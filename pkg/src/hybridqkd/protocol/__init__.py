"""SNS and MDI protocol pipelines."""

from .hybrid import HybridLog, run_hybrid_session
from .mdi import mdi_expected_tally, run_mdi_batch
from .sns import (
    AoppStats,
    SiftedKey,
    SnsOptions,
    aopp_expected,
    aopp_pair,
    run_sns_batch,
    sift_sns_z,
    sns_expected_tally,
    sns_z_bits,
    sns_z_error_rate,
)
from .tally import Cell, TallySheet, ZEvents, cell_label
from .windows import Basis, WindowChoice, WindowKind, draw_window, state_table

__all__ = [
    "AoppStats", "Basis", "Cell", "HybridLog", "SiftedKey", "SnsOptions", "TallySheet",
    "WindowChoice", "WindowKind", "ZEvents", "aopp_expected", "aopp_pair", "cell_label",
    "draw_window", "mdi_expected_tally", "run_hybrid_session", "run_mdi_batch",
    "run_sns_batch", "sift_sns_z", "sns_expected_tally", "sns_z_bits", "sns_z_error_rate",
    "state_table",
]
