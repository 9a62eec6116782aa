"""Episodic single-agent environment over the corridor world.

An episode inserts one connected vehicle at a random time drawn from the
configured window, runs it under injected hybrid actions (lane decision k
plus acceleration x_k, both passed raw: the world applies mask and clip),
and ends when the ego passes the final stop line, a timeout elapses, or a
collision fault aborts the run (which the safety layer is there to prevent).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CollisionFault, EcoDriveError
from ..sim.models import hdv_lane_change
from ..sim.params import ScenarioConfig, resolve_scenario
from ..sim.world import CV, World
from .observation import LogicState, build_logic_state, build_occupancy_grid
from .reward import RewardConfig, compute_reward, step_penalties

INSERTION_WAIT_BUDGET = 120.0  # s of deferred-insertion retries before giving up


@dataclass
class StepLog:
    t: float
    pos: float
    lane: int
    speed: float
    accel: float
    energy_wh: float
    distance: float
    jerk: float
    lane_change: bool
    k_raw: int
    k: int
    x_raw: float
    x_clipped: float
    reward: float


@dataclass
class EpisodeRecord:
    seed: int
    insert_time: float
    reason: str = ""
    energy_wh: float = 0.0          # E_f
    travel_time: float = 0.0        # T_f
    lane_changes: int = 0
    episode_return: float = 0.0
    steps: list[StepLog] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "insert_time": self.insert_time,
            "reason": self.reason,
            "energy_wh": self.energy_wh,
            "travel_time": self.travel_time,
            "lane_changes": self.lane_changes,
            "episode_return": self.episode_return,
            "n_steps": len(self.steps),
        }


class EcoDriveEnv:
    def __init__(self, scenario, reward: RewardConfig | None = None,
                 keep_step_logs: bool = True):
        self.cfg: ScenarioConfig = resolve_scenario(scenario)
        self.reward_cfg = reward or RewardConfig()
        self.reward_cfg.validate()
        self.keep_step_logs = keep_step_logs
        self.world: World | None = None
        self.ego_id: int | None = None
        self.record: EpisodeRecord | None = None
        self._prev_accel = 0.0
        self._done = True

    # ------------------------------------------------------------------
    def _warm_and_insert(self, seed: int, controlled: bool,
                         record_trajectories: bool = False):
        """Warm the world up to a sampled insertion time and insert the ego.

        The insertion time is uniform over the configured window; a blocked
        entry defers to the next step (never overlapping), up to a budget.
        The draw depends only on the seed, so paired runs of different
        controllers insert at identical times into identical worlds.
        """
        rng = np.random.default_rng([seed, 1009])
        lo, hi = self.cfg.insert_window
        t_insert = rng.uniform(lo, hi)
        lane_order = rng.permutation(self.cfg.lane_count)

        self.world = World(self.cfg, seed=seed,
                           record_trajectories=record_trajectories)
        while self.world.t < t_insert:
            self.world.step()

        self.ego_id = None
        waited = 0.0
        while self.ego_id is None:
            for lane in lane_order:
                vid = self.world.insert_vehicle(CV, int(lane), controlled=controlled)
                if vid is not None:
                    self.ego_id = vid
                    break
            if self.ego_id is None:
                if waited >= INSERTION_WAIT_BUDGET:
                    raise EcoDriveError(
                        f"ego insertion blocked for {waited:.0f}s (seed {seed})")
                self.world.step()
                waited += self.cfg.dt
        self.record = EpisodeRecord(seed=seed, insert_time=self.world.t)
        self._prev_accel = 0.0
        self._done = False

    def reset(self, seed: int, record_trajectories: bool = False) -> tuple[np.ndarray, LogicState]:
        self._warm_and_insert(seed, controlled=True,
                              record_trajectories=record_trajectories)
        return self.observe()

    def rule_lane_decision(self) -> int:
        """The lane decision the human model would take for the ego now."""
        w = self.world
        i = w.index_of(self.ego_id)
        if w.lc_timer[i] > 0:
            return 0
        orders = w._lane_orders()
        cur = w._neighbors_in_lane(i, int(w.lane[i]), orders)[:2]
        neighbors = {}
        for d in (-1, 1):
            tgt = int(w.lane[i]) + d
            if 0 <= tgt < self.cfg.lane_count:
                neighbors[d] = w._neighbors_in_lane(i, tgt, orders)
        if not neighbors:
            return 0
        k = hdv_lane_change(float(w.speed[i]), cur, neighbors,
                            self.cfg.driver, self.cfg.dt, self.cfg.speed_limit)
        if k != 0 and w._merge_strand_hazard(i, int(w.lane[i]) + k, orders):
            return 0
        return k

    def run_human_baseline(self, seed: int,
                           record_trajectories: bool = False) -> EpisodeRecord:
        """Drive the ego with the human models (car following, lane changes,
        imperfection) through an episode paired with ``reset(seed)``."""
        self._warm_and_insert(seed, controlled=False,
                              record_trajectories=record_trajectories)
        w = self.world
        rec = self.record
        prev_energy = 0.0
        prev_accel = 0.0
        while True:
            w.step()
            if not w.present(self.ego_id):
                rec.reason = "completed"
                rec.travel_time = w.t - rec.insert_time
                break
            i = w.index_of(self.ego_id)
            e_step = float(w.energy[i]) - prev_energy
            prev_energy = float(w.energy[i])
            if self.keep_step_logs:
                jerk = (float(w.accel[i]) - prev_accel) / self.cfg.dt
                prev_accel = float(w.accel[i])
                rec.steps.append(StepLog(
                    t=w.t, pos=float(w.pos[i]), lane=int(w.lane[i]),
                    speed=float(w.speed[i]), accel=float(w.accel[i]),
                    energy_wh=e_step, distance=float(w.speed[i]) * self.cfg.dt,
                    jerk=jerk, lane_change=False, k_raw=0, k=0,
                    x_raw=0.0, x_clipped=0.0, reward=0.0))
            elapsed = w.t - rec.insert_time
            if w.pos[i] >= self.cfg.final_stop_line:
                rec.reason = "completed"
                rec.travel_time = elapsed
                rec.energy_wh = float(w.energy[i])
                rec.lane_changes = int(w.lane_changes[i])
                break
            if elapsed >= self.cfg.episode_timeout:
                rec.reason = "timeout"
                rec.travel_time = elapsed
                rec.energy_wh = float(w.energy[i])
                rec.lane_changes = int(w.lane_changes[i])
                break
        self._done = True
        return rec

    def observe(self) -> tuple[np.ndarray, LogicState]:
        return (build_occupancy_grid(self.world, self.ego_id),
                build_logic_state(self.world, self.ego_id))

    @property
    def done(self) -> bool:
        return self._done

    # ------------------------------------------------------------------
    def step(self, action: tuple[int, float], need_obs: bool = True):
        """Apply one hybrid action. Returns (obs, reward, done, info).

        ``need_obs=False`` skips observation building for callers that do
        not condition on state (random-action sweeps).
        """
        if self._done:
            raise EcoDriveError("step called on a finished episode")
        k_raw, x_raw = int(action[0]), float(action[1])
        world = self.world
        rec = self.record

        try:
            out = world.step({self.ego_id: (k_raw, x_raw)})[self.ego_id]
            collision = False
        except CollisionFault:
            collision = True
            out = None

        if collision:
            # should be unreachable with mask/clip active; ends the episode
            rec.reason = "collision_fault"
            rec.travel_time = world.t - rec.insert_time
            self._done = True
            obs = None
            reward = compute_reward(self.reward_cfg, speed=0.0, jerk=0.0,
                                    lane_change=False, distance=0.0, energy_wh=0.0,
                                    terminal=True, total_energy_wh=rec.energy_wh,
                                    travel_time=rec.travel_time)
            rec.episode_return += reward
            return obs, reward, True, {"reason": "collision_fault"}

        jerk = (out["accel"] - self._prev_accel) / self.cfg.dt
        self._prev_accel = out["accel"]
        rec.energy_wh += out["energy_wh"]
        rec.lane_changes += out["lane_change_initiated"]

        elapsed = world.t - rec.insert_time
        done = False
        reason = ""
        if out["pos"] >= self.cfg.final_stop_line:
            done, reason = True, "completed"
        elif elapsed >= self.cfg.episode_timeout:
            done, reason = True, "timeout"

        if done:
            rec.reason = reason
            rec.travel_time = elapsed

        reward = compute_reward(
            self.reward_cfg, speed=out["speed"], jerk=jerk,
            lane_change=out["lane_change_initiated"], distance=out["distance"],
            energy_wh=out["energy_wh"], terminal=done,
            total_energy_wh=rec.energy_wh, travel_time=rec.travel_time)
        rec.episode_return += reward
        _, fired = step_penalties(self.reward_cfg, out["speed"], jerk,
                                  out["lane_change_initiated"])

        info = {
            "t": world.t,
            "pos": out["pos"], "lane": out["lane"], "speed": out["speed"],
            "accel": out["accel"], "energy_wh": out["energy_wh"],
            "distance": out["distance"], "jerk": jerk,
            "lane_change": out["lane_change_initiated"],
            "k_raw": out["k_raw"], "k": out["k"],
            "x_raw": out["x_raw"], "x_cf": out["x_cf"],
            "x_clipped": out["x_clipped"],
            "penalties": fired, "reason": reason,
        }
        if self.keep_step_logs:
            rec.steps.append(StepLog(
                t=world.t, pos=out["pos"], lane=out["lane"], speed=out["speed"],
                accel=out["accel"], energy_wh=out["energy_wh"],
                distance=out["distance"], jerk=jerk,
                lane_change=out["lane_change_initiated"],
                k_raw=out["k_raw"], k=out["k"], x_raw=out["x_raw"],
                x_clipped=out["x_clipped"], reward=reward))

        self._done = done
        obs = None
        if need_obs and world.present(self.ego_id):
            obs = self.observe()
        return obs, reward, done, info
