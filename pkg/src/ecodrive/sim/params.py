"""Scenario parameters: corridor geometry, signal programs, driver and energy models.

Defaults follow the standard corridor used throughout the experiments:
five signalized intersections spaced 500 m after a 300 m approach, a 90 s
cycle split 45/45, V2I range 300 m, and a 50 km/h speed limit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from ..errors import ConfigurationError

KMH = 1.0 / 3.6


@dataclass
class SignalProgram:
    stop_line: float
    cycle: float = 90.0
    offset: float = 0.0
    green_start: float = 0.0
    green_duration: float = 45.0

    def validate(self):
        if not 0 <= self.offset < self.cycle:
            raise ConfigurationError(f"signal offset {self.offset} outside [0, cycle)")
        if not 0 < self.green_duration < self.cycle:
            raise ConfigurationError("green duration must lie strictly inside the cycle")


@dataclass
class EnergyParams:
    mass: float = 1500.0          # kg
    rolling_coeff: float = 0.01
    air_density: float = 1.225    # kg/m^3
    drag_coeff: float = 0.32
    frontal_area: float = 2.4     # m^2
    eta_propulsion: float = 0.9
    eta_recuperation: float = 0.6
    gravity: float = 9.81

    def validate(self):
        if not 0 < self.eta_propulsion <= 1:
            raise ConfigurationError("eta_propulsion must be in (0, 1]")
        if not 0 <= self.eta_recuperation < 1:
            raise ConfigurationError("eta_recuperation must be in [0, 1)")
        for name in ("mass", "rolling_coeff", "air_density", "drag_coeff", "frontal_area", "gravity"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")


@dataclass
class DriverParams:
    """Krauss car-following plus simplified lane-change behavior."""
    decel: float = 4.0            # assumed max braking b, m/s^2
    reaction: float = 1.0         # tau, s
    sigma: float = 0.5            # imperfection for HDVs; 0 disables dawdling
    min_gap: float = 2.0          # standstill bumper gap reserve, m
    lc_hysteresis: float = 1.0    # required safe-speed gain to change lane, m/s


@dataclass
class ScenarioConfig:
    name: str = "noncoordinated"
    lane_count: int = 3
    length: float = 2800.0
    signals: list[SignalProgram] = field(default_factory=list)
    v2i_range: float = 300.0
    speed_limit: float = 50.0 * KMH
    dt: float = 1.0
    a_min: float = -4.0
    a_max: float = 3.0
    vehicle_length: float = 5.0
    lane_change_duration: float = 3.0
    intersection_box: float = 20.0
    demand: float = 1000.0        # veh/h
    demand_units: str = "corridor"  # or "per_lane"
    cv_share: float = 0.0         # probability a spawned vehicle is a CV
    driver: DriverParams = field(default_factory=DriverParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    # perception window of the connected vehicle
    l_head: float = 50.0
    l_tail: float = 10.0
    l_cell: float = 1.0
    # episode shape
    insert_window: tuple[float, float] = (150.0, 300.0)
    episode_timeout: float = 600.0

    def validate(self):
        if self.lane_count < 1:
            raise ConfigurationError("lane_count must be >= 1")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.v2i_range <= 0:
            raise ConfigurationError("v2i_range must be positive")
        if self.a_min >= 0 or self.a_max <= 0:
            raise ConfigurationError("need a_min < 0 < a_max")
        if self.demand < 0:
            raise ConfigurationError("demand must be >= 0")
        if self.demand_units not in ("corridor", "per_lane"):
            raise ConfigurationError(f"unknown demand_units {self.demand_units!r}")
        if not 0 <= self.cv_share <= 1:
            raise ConfigurationError("cv_share must be in [0, 1]")
        prev = -1.0
        for sig in self.signals:
            sig.validate()
            if sig.stop_line <= prev:
                raise ConfigurationError("signals must have strictly increasing stop lines")
            prev = sig.stop_line
        self.energy.validate()
        grid_rows = (self.l_head + self.l_tail) / self.l_cell
        if abs(grid_rows - round(grid_rows)) > 1e-9:
            raise ConfigurationError("perceived range must be a whole number of cells")

    @property
    def grid_rows(self) -> int:
        return int(round((self.l_head + self.l_tail) / self.l_cell))

    @property
    def demand_total(self) -> float:
        if self.demand_units == "per_lane":
            return self.demand * self.lane_count
        return self.demand

    @property
    def final_stop_line(self) -> float:
        if not self.signals:
            return self.length
        return self.signals[-1].stop_line

    def to_dict(self) -> dict:
        d = asdict(self)
        d["insert_window"] = list(self.insert_window)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        d["signals"] = [SignalProgram(**s) for s in d.get("signals", [])]
        if "driver" in d:
            d["driver"] = DriverParams(**d["driver"])
        if "energy" in d:
            d["energy"] = EnergyParams(**d["energy"])
        if "insert_window" in d:
            d["insert_window"] = tuple(d["insert_window"])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "ScenarioConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def corridor_scenario(coordinated: bool, lane_count: int = 3, demand: float = 1000.0,
                      demand_units: str = "corridor", n_signals: int = 5,
                      spacing: float = 500.0, approach: float = 300.0,
                      cycle: float = 90.0, green: float = 45.0, dt: float = 1.0) -> ScenarioConfig:
    """The standard multi-intersection corridor.

    Non-coordinated signals switch synchronously; coordinated signals are
    offset by the free-flow travel time between stop lines so a vehicle at
    the speed limit rides a green wave.
    """
    v_max = 50.0 * KMH
    signals = []
    for i in range(n_signals):
        stop_line = approach + i * spacing
        if coordinated:
            offset = (round((i * spacing / v_max) / dt) * dt) % cycle
        else:
            offset = 0.0
        signals.append(SignalProgram(stop_line=stop_line, cycle=cycle, offset=offset,
                                     green_start=0.0, green_duration=green))
    cfg = ScenarioConfig(
        name="coordinated" if coordinated else "noncoordinated",
        lane_count=lane_count,
        length=approach + n_signals * spacing,
        signals=signals,
        demand=demand,
        demand_units=demand_units,
        dt=dt,
    )
    cfg.validate()
    return cfg


BUILTIN_SCENARIOS = {
    "noncoordinated": lambda: corridor_scenario(coordinated=False),
    "coordinated": lambda: corridor_scenario(coordinated=True),
}


def resolve_scenario(ref) -> ScenarioConfig:
    """Accepts a ScenarioConfig, a builtin name, a path, or an inline dict."""
    if isinstance(ref, ScenarioConfig):
        return ref
    if isinstance(ref, dict):
        return ScenarioConfig.from_dict(ref)
    if isinstance(ref, str):
        if ref in BUILTIN_SCENARIOS:
            return BUILTIN_SCENARIOS[ref]()
        return ScenarioConfig.load(ref)
    raise ConfigurationError(f"cannot resolve scenario from {type(ref).__name__}")
