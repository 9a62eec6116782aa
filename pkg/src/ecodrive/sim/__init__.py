from .energy import energy_step
from .models import (
    following_safe_speed,
    gap_check,
    hdv_lane_change,
    krauss_safe_speed,
    lane_change_incentive,
    time_to_reach,
)
from .params import (
    BUILTIN_SCENARIOS,
    DriverParams,
    EnergyParams,
    ScenarioConfig,
    SignalProgram,
    corridor_scenario,
    resolve_scenario,
)
from .signals import phase_times, signal_query
from .world import CV, HDV, DepartedVehicle, World

__all__ = [
    "BUILTIN_SCENARIOS", "CV", "DepartedVehicle", "DriverParams", "EnergyParams",
    "HDV", "ScenarioConfig", "SignalProgram", "World", "corridor_scenario",
    "energy_step", "following_safe_speed", "gap_check", "hdv_lane_change",
    "krauss_safe_speed", "lane_change_incentive", "phase_times", "resolve_scenario",
    "signal_query", "time_to_reach",
]
