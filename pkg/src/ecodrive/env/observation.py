"""Agent observations: occupancy grid over the perceived range plus the
logic vector (lane one-hot, signal distance, speed, SPaT flags)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..sim.params import ScenarioConfig
from ..sim.signals import signal_query
from ..sim.world import World


@dataclass
class LogicState:
    lane_onehot: np.ndarray
    distance_to_signal: float   # m, saturated at the V2I range
    speed: float                # m/s
    red_flag: float             # 1 red, 0 green, -1 outside V2I range
    time_to_green: float        # s; 0 during green, -1 outside V2I range

    def features(self, cfg: ScenarioConfig) -> np.ndarray:
        """Network input: one-hot plus scaled scalars; -1 defaults pass through."""
        cycle = max((s.cycle for s in cfg.signals), default=1.0)
        g = self.time_to_green / cycle if self.time_to_green >= 0 else -1.0
        return np.concatenate([
            self.lane_onehot,
            [self.distance_to_signal / cfg.v2i_range,
             self.speed / cfg.speed_limit,
             self.red_flag,
             g],
        ])


def logic_feature_length(cfg: ScenarioConfig) -> int:
    return cfg.lane_count + 4


def grid_shape(cfg: ScenarioConfig) -> tuple[int, int]:
    return cfg.grid_rows, cfg.lane_count


def build_occupancy_grid(world: World, ego_id: int) -> np.ndarray:
    """Binary matrix over the ego's perceived range; 0 = occupied, 1 = free.

    Row 0 is the rearmost cell (L_tail behind the ego), the last row the
    farthest forward. A cell is occupied when any other vehicle's body
    [pos - length, pos] intersects it; column = lane index.
    """
    cfg = world.cfg
    i = world.index_of(ego_id)
    rows, lanes = grid_shape(cfg)
    lc = cfg.l_cell
    lo = world.pos[i] - cfg.l_tail
    grid = np.ones((rows, lanes), dtype=np.uint8)

    near = (world.pos >= lo) & (world.pos - world.length < lo + rows * lc)
    near[i] = False
    for j in np.nonzero(near)[0]:
        r_min = int(np.floor((world.pos[j] - world.length[j] - lo) / lc))
        r_max = int(np.floor((world.pos[j] - lo) / lc))
        r_min = max(r_min, 0)
        r_max = min(r_max, rows - 1)
        if r_min <= r_max:
            grid[r_min:r_max + 1, int(world.lane[j])] = 0
    return grid


def build_logic_state(world: World, ego_id: int) -> LogicState:
    """Ego physical state plus SPaT of the next signal.

    SPaT features default to -1 outside the V2I range and while the ego is
    inside an intersection box (just past a stop line); the reported
    distance saturates at the V2I range so the feature stays bounded.
    """
    cfg = world.cfg
    i = world.index_of(ego_id)
    pos = float(world.pos[i])
    onehot = np.zeros(cfg.lane_count)
    onehot[int(world.lane[i])] = 1.0

    sig_idx = int(world.next_signal_index(pos))
    in_box = False
    if sig_idx > 0:
        in_box = pos < cfg.signals[sig_idx - 1].stop_line + cfg.intersection_box
    if sig_idx >= len(cfg.signals):
        return LogicState(onehot, cfg.v2i_range, float(world.speed[i]), -1.0, -1.0)

    signal = cfg.signals[sig_idx]
    d_raw = signal.stop_line - pos
    d = min(d_raw, cfg.v2i_range)
    if d_raw > cfg.v2i_range or in_box:
        return LogicState(onehot, d, float(world.speed[i]), -1.0, -1.0)
    is_red, ttg = signal_query(signal, world.t)
    return LogicState(onehot, d, float(world.speed[i]),
                      1.0 if is_red else 0.0, float(ttg))
