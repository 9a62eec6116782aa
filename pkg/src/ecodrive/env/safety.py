"""Stateless queries for the action safety layer.

The world applies the same logic when stepping; these entry points let the
reward/diagnostics code and the tests ask "what would the safety layer do
right now" without advancing time.
"""

from __future__ import annotations

import numpy as np

from ..sim.world import World


def clip_action(world: World, vehicle_id: int, x_k: float) -> dict:
    """Clip a requested acceleration against the car-following-safe value.

    Returns the clip breakdown: x_cf (deterministic Krauss accel given the
    current leader or a red stop line), x_clipped = min(x_cf, x_k), and the
    realized acceleration after the speed is clamped to [0, V_max].
    """
    cfg = world.cfg
    i = world.index_of(vehicle_id)
    x_cf = world.cf_accel(i)
    x_clipped = min(x_cf, float(x_k))
    v = float(world.speed[i])
    v_new = float(np.clip(v + x_clipped * cfg.dt, 0.0, cfg.speed_limit))
    return {"x_cf": x_cf, "x_clipped": x_clipped,
            "realized_accel": (v_new - v) / cfg.dt, "realized_speed": v_new}


def mask_lane_change(world: World, vehicle_id: int, k: int) -> int:
    """k times the gap-acceptance verdict: 0 stays 0, unsafe requests zero out,
    and a vehicle already mid-change is always masked."""
    if k == 0:
        return 0
    i = world.index_of(vehicle_id)
    target = int(world.lane[i]) + int(k)
    return int(k) if world.lane_change_feasible(i, target) else 0
