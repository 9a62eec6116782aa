"""Reward variants for the eco-driving task.

Three forms are supported:

* ``r1`` -- terminal only: -(E_f + phi * T_f) when the episode ends.
* ``r2`` -- step-wise proxy: distance advanced minus phi * step energy.
* ``r``  -- step-wise penalties (slow speed, jerk, lane change, stored as
  magnitudes and applied negatively) plus the same terminal term as r1.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigurationError

VARIANTS = ("r1", "r2", "r")


@dataclass
class RewardConfig:
    variant: str = "r"
    phi: float = 1.0
    slow_penalty: float = 40.0         # magnitude, applied negatively
    jerk_penalty: float = 30.0
    lane_change_penalty: float = 50.0
    speed_threshold: float = 1.5       # m/s
    jerk_threshold: float = 4.0        # m/s^3

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown reward variant {self.variant!r}")
        if self.phi < 0:
            raise ConfigurationError("phi must be >= 0")
        if self.speed_threshold <= 0 or self.jerk_threshold <= 0:
            raise ConfigurationError("penalty thresholds must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg


def step_penalties(cfg: RewardConfig, speed: float, jerk: float,
                   lane_change: bool) -> tuple[float, dict]:
    """Summed negative penalty contributions plus which ones fired."""
    fired = {
        "slow": speed < cfg.speed_threshold,
        "jerk": abs(jerk) > cfg.jerk_threshold,
        "lane_change": bool(lane_change),
    }
    total = (-cfg.slow_penalty * fired["slow"]
             - cfg.jerk_penalty * fired["jerk"]
             - cfg.lane_change_penalty * fired["lane_change"])
    return total, fired


def compute_reward(cfg: RewardConfig, *, speed: float, jerk: float,
                   lane_change: bool, distance: float, energy_wh: float,
                   terminal: bool, total_energy_wh: float = 0.0,
                   travel_time: float = 0.0) -> float:
    """Reward for one step under the configured variant.

    ``distance`` and ``energy_wh`` are this step's advance and consumption;
    the totals are only read at the terminal step.
    """
    terminal_term = -(total_energy_wh + cfg.phi * travel_time) if terminal else 0.0
    if cfg.variant == "r1":
        return terminal_term
    if cfg.variant == "r2":
        return distance - cfg.phi * energy_wh
    penalties, _ = step_penalties(cfg, speed, jerk, lane_change)
    return penalties + terminal_term
