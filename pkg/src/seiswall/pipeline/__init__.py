from .motion import (GroundMotion, MotionFileError, MotionUnits, design_lowpass,
                     load_ground_motion, lowpass_filter, predominant_frequency,
                     synthesize_motion)
from .postprocess import (AnalyticalParams, ComparisonRow, PressureExtent, PressureProfile,
                          PressureRecord, Side, ZeroResultantError, application_height,
                          back_calculate_K, comparison_table, k_h_series, probe_node,
                          select_peaks, summarize_observations, wall_pressure_profile)
from .run import DynamicRun, StaticRun, run_dynamic, run_static

__all__ = [
    "GroundMotion", "MotionFileError", "MotionUnits", "design_lowpass", "load_ground_motion",
    "lowpass_filter", "predominant_frequency", "synthesize_motion",
    "AnalyticalParams", "ComparisonRow", "PressureExtent", "PressureProfile", "PressureRecord",
    "Side", "ZeroResultantError", "application_height", "back_calculate_K", "comparison_table",
    "k_h_series", "probe_node", "select_peaks", "summarize_observations",
    "wall_pressure_profile",
    "DynamicRun", "StaticRun", "run_dynamic", "run_static",
]
