"""Experiment drivers: sandbox beds, repose calibration, sinkage runs and analysis."""

from .analysis import (LUNAR_SCALE, BekkerFit, ComparisonReport, bekker_fit, compare_curves,
                       fit_record, lunar_compare, palm_area)
from .repose import ReposeResult, ReposeSpec, angle_of_repose, heap_angle
from .sandbox import (Bed, SandboxSpec, desk_sandbox, fill_and_settle, full_sandbox,
                      sandbox_preset, settle, surface_depth, surface_height_map)
from .sinkage import (CSV_COLUMNS, RunRecord, SweepResult, desk_gripper, place_gripper,
                      pressure_sinkage_run, scaled_profile, slope_sweep)

__all__ = [
    "LUNAR_SCALE", "BekkerFit", "ComparisonReport", "bekker_fit", "compare_curves", "fit_record",
    "lunar_compare", "palm_area", "ReposeResult", "ReposeSpec", "angle_of_repose", "heap_angle",
    "Bed", "SandboxSpec", "desk_sandbox", "fill_and_settle", "full_sandbox", "sandbox_preset",
    "settle", "surface_depth", "surface_height_map", "CSV_COLUMNS", "RunRecord", "SweepResult",
    "desk_gripper", "place_gripper", "pressure_sinkage_run", "scaled_profile", "slope_sweep",
]
