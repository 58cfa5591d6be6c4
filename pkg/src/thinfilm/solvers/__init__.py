"""Time integrators for the thin-film equation and trajectory audits."""

from .audit import (
    BlowupReport,
    EnergyAudit,
    SmallDataConfig,
    SmallDataTable,
    blowup_detect,
    energy_identity_residual,
    small_data_gradient_check,
    sobolev_norm_of_time_slice,
)
from .etd import COLUMNS, StepperConfig, Trajectory, integrate
from .picard import PicardConfig, PicardResult, horizon_bound, picard_solve

__all__ = [
    "BlowupReport", "COLUMNS", "EnergyAudit", "PicardConfig", "PicardResult", "SmallDataConfig",
    "SmallDataTable", "StepperConfig", "Trajectory", "blowup_detect", "energy_identity_residual",
    "horizon_bound", "integrate", "picard_solve", "small_data_gradient_check", "sobolev_norm_of_time_slice",
]
