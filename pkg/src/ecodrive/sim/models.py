"""Longitudinal and lateral driver models.

All functions accept scalars or numpy arrays so the world can evaluate an
entire lane in one call and the tests can probe single situations.

The discrete update integrates positions trapezoidally, so a follower that
decelerates covers more ground in a step than its new speed alone implies.
``following_safe_speed`` therefore reserves half a step of the follower's
current travel (plus the standstill gap) before applying the closed-form
safe speed; without that reserve a queue approach can overshoot the leader.
"""

from __future__ import annotations

import numpy as np

from ..errors import CollisionFault
from .params import DriverParams


def krauss_safe_speed(v_follower, v_leader, gap, decel: float, reaction: float,
                      check: bool = True):
    """Closed-form safe speed: -b*tau + sqrt(b^2 tau^2 + v_leader^2 + 2 b gap).

    Guarantees the follower can stop behind a maximally braking leader.
    The follower's own speed does not enter the closed form. ``check=False``
    skips the negative-gap fault for callers that pre-clamp the gap.
    """
    gap = np.asarray(gap, dtype=np.float64)
    if check and np.any(gap < 0):
        raise CollisionFault(-1, -1, float("nan"))
    bt = decel * reaction
    v_safe = -bt + np.sqrt(bt * bt + np.square(v_leader) + 2.0 * decel * gap)
    return np.maximum(v_safe, 0.0)


def following_safe_speed(speed, leader_speed, gap, p: DriverParams, dt: float):
    """Safe speed behind a leader at raw bumper gap, with discrete-update margins."""
    eff_gap = np.maximum(np.asarray(gap, dtype=np.float64) - p.min_gap
                         - np.asarray(speed) * (dt / 2.0), 0.0)
    return krauss_safe_speed(speed, leader_speed, eff_gap, p.decel, p.reaction, check=False)


def hdv_longitudinal(speed, leader_speed, gap, p: DriverParams, dt: float,
                     a_min: float, a_max: float, v_max: float, u=0.0, sigma=None):
    """Krauss car-following acceleration.

    v_desired = min(v_safe, v + a_max*dt, V_max); the stochastic imperfection
    subtracts sigma*a_max*dt*u with u ~ U(0,1); the returned acceleration is
    (v_next - v)/dt clamped to [a_min, a_max]. Pass gap=inf for a free road.
    """
    sigma = p.sigma if sigma is None else sigma
    v_safe = following_safe_speed(speed, leader_speed, gap, p, dt)
    v_des = np.minimum(np.minimum(v_safe, np.asarray(speed) + a_max * dt), v_max)
    v_next = np.maximum(v_des - sigma * a_max * dt * np.asarray(u), 0.0)
    return np.clip((v_next - speed) / dt, a_min, a_max)


def time_to_reach(distance, speed, a_max: float, v_max: float):
    """Optimistic time to cover ``distance``: full acceleration, then cruise."""
    distance = np.asarray(distance, dtype=np.float64)
    speed = np.asarray(speed, dtype=np.float64)
    d_accel = np.maximum((v_max * v_max - speed * speed) / (2.0 * a_max), 0.0)
    within = distance <= d_accel
    t_within = (-speed + np.sqrt(np.maximum(speed * speed + 2.0 * a_max * distance, 0.0))) / a_max
    t_beyond = (v_max - speed) / a_max + (distance - d_accel) / v_max
    return np.where(within, t_within, t_beyond)


def gap_check(ego_speed: float, leader_speed: float, leader_gap: float,
              follower_speed: float, follower_gap: float,
              p: DriverParams, dt: float) -> bool:
    """Lane-change acceptance: neither the ego nor the prospective follower
    would be forced below (current speed - b*dt) by the new adjacency.

    Gaps are raw bumper gaps; pass inf when the slot is empty. Both gaps
    must also clear the standstill reserve: the speed criterion is vacuous
    below b*dt, and a slot smaller than min_gap cannot absorb even the
    one-step travel of a crawling vehicle.
    """
    if leader_gap < p.min_gap or follower_gap < p.min_gap:
        return False
    ego_ok = following_safe_speed(ego_speed, leader_speed, leader_gap, p, dt) \
        >= ego_speed - p.decel * dt
    follower_ok = following_safe_speed(follower_speed, ego_speed, follower_gap, p, dt) \
        >= follower_speed - p.decel * dt
    return bool(ego_ok and follower_ok)


def lane_change_incentive(speed, cur_leader_speed, cur_leader_gap,
                          tgt_leader_speed, tgt_leader_gap,
                          p: DriverParams, dt: float, v_max: float):
    """Safe-speed gain offered by a target lane, both sides capped at V_max."""
    cur = np.minimum(following_safe_speed(speed, cur_leader_speed, cur_leader_gap, p, dt), v_max)
    tgt = np.minimum(following_safe_speed(speed, tgt_leader_speed, tgt_leader_gap, p, dt), v_max)
    return tgt - cur


def hdv_lane_change(speed: float, cur_leader: tuple[float, float],
                    neighbors: dict[int, tuple[float, float, float, float]],
                    p: DriverParams, dt: float, v_max: float) -> int:
    """Simplified LC2013 decision for one vehicle.

    ``cur_leader`` is (leader_speed, leader_gap) in the current lane;
    ``neighbors`` maps direction (-1 left, +1 right) to
    (leader_speed, leader_gap, follower_speed, follower_gap) in that lane.
    Requires a safe-speed gain above the hysteresis margin and a passing
    gap check; ties prefer staying, then the right lane.
    """
    gains = {}
    for direction, (ls, lg, fs, fg) in neighbors.items():
        gain = float(lane_change_incentive(speed, cur_leader[0], cur_leader[1],
                                           ls, lg, p, dt, v_max))
        gains[direction] = (gain, (ls, lg, fs, fg))
    order = sorted(gains.items(), key=lambda kv: (-kv[1][0], -kv[0]))
    for direction, (gain, (ls, lg, fs, fg)) in order:
        if gain <= p.lc_hysteresis:
            break
        if gap_check(speed, ls, lg, fs, fg, p, dt):
            return direction
    return 0
