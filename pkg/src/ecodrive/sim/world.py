"""Deterministic multi-lane corridor microsimulation.

State is kept in parallel numpy arrays so one step is a fixed number of
vectorized operations regardless of vehicle count. All randomness comes from
counter-based Philox streams keyed by (world seed, step, stream) and indexed
by vehicle id, which makes the background departure stream and per-vehicle
imperfection draws a pure function of the seed: controllers evaluated
against the same seed face identical traffic.

Update order per step: signal phases -> HDV decisions -> injected CV
actions -> kinematics -> lane-change timers -> energy -> departures and
arrivals. Positions advance by v*dt + a*dt^2/2; accelerations are always
chosen so speeds stay inside [0, V_max], making that formula exact.

A vehicle changing lanes keeps its lane index (and its occupancy-grid cell)
in the origin lane until the timer expires, but reserves the target lane for
everyone's gap logic from the moment the change starts; without the
reservation a follower in the target lane could close in and overlap at the
switch instant.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import CollisionFault
from .energy import energy_step
from .models import (
    following_safe_speed,
    gap_check,
    hdv_lane_change,
    time_to_reach,
)
from .params import ScenarioConfig
from .signals import phase_times

HDV, CV = 0, 1

_STREAM_SPAWN = 1
_STREAM_NOISE = 2

MIN_ENTRY_SPEED = 2.0
LC_COOLDOWN = 5.0       # s between successive human lane changes
MAX_LC_CONFIRMS = 12    # scalar lane-change confirmations per step

_FIELDS = ("ids", "kind", "lane", "pos", "speed", "accel", "length",
           "lc_timer", "lc_target", "lc_cooldown", "energy", "depart",
           "entry_pos", "lane_changes")


def _stoppable(speed, dist, decel: float, dt: float):
    """Whether full braking keeps the front bumper within ``dist`` under the
    trapezoidal position update."""
    need = np.square(speed) / (2.0 * decel) + np.asarray(speed) * (dt / 2.0) \
        + decel * dt * dt / 8.0
    return need <= np.asarray(dist)


@dataclass
class DepartedVehicle:
    vehicle_id: int
    kind: int
    depart_time: float
    exit_time: float
    energy_wh: float
    distance: float
    lane_changes: int

    @property
    def travel_time(self) -> float:
        return self.exit_time - self.depart_time

    @property
    def avg_speed(self) -> float:
        tt = self.travel_time
        return self.distance / tt if tt > 0 else 0.0


class World:
    def __init__(self, cfg: ScenarioConfig, seed: int, record_trajectories: bool = False,
                 auto_control_cvs: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.seed = int(seed)
        self.t = 0.0
        self.step_idx = 0
        self.next_id = 0
        self.record_trajectories = record_trajectories
        # flow mode spawns CVs that wait for injected actions instead of
        # falling back to the human-driver model
        self.auto_control_cvs = auto_control_cvs

        self.ids = np.zeros(0, dtype=np.int64)
        self.kind = np.zeros(0, dtype=np.int8)
        self.lane = np.zeros(0, dtype=np.int64)
        self.pos = np.zeros(0)        # front bumper, m
        self.speed = np.zeros(0)
        self.accel = np.zeros(0)
        self.length = np.zeros(0)
        self.lc_timer = np.zeros(0)
        self.lc_target = np.full(0, -1, dtype=np.int64)
        self.lc_cooldown = np.zeros(0)
        self.energy = np.zeros(0)     # cumulative Wh
        self.depart = np.zeros(0)
        self.entry_pos = np.zeros(0)
        self.lane_changes = np.zeros(0, dtype=np.int64)

        self.controlled: set[int] = set()
        self.spawn_queue: deque = deque()
        self.departed: list[DepartedVehicle] = []
        self.red_crossings: list[tuple[int, float]] = []
        self.spawned_count = 0
        self.trajectory_rows: list[tuple] = []

        self._stop_lines = np.array([s.stop_line for s in cfg.signals])
        self._sig_offset = np.array([s.offset for s in cfg.signals])
        self._sig_cycle = np.array([s.cycle for s in cfg.signals])
        self._sig_green_start = np.array([s.green_start for s in cfg.signals])
        self._sig_green_dur = np.array([s.green_duration for s in cfg.signals])
        self._philox = np.random.Philox(key=self.seed)
        self._gen = np.random.Generator(self._philox)
        self._philox_key = self._philox.state["state"]["key"].copy()

    # ------------------------------------------------------------------
    # randomness: one counter-based stream per step, stable per (seed, step);
    # the draw order inside a step is fixed and every draw size is a pure
    # function of the seed, so runs sharing a seed share all background draws
    # ------------------------------------------------------------------
    def _step_rng(self) -> np.random.Generator:
        # reposition the counter at a disjoint block per step; rewriting the
        # state in place avoids re-seeding costs
        counter = np.zeros(4, dtype=np.uint64)
        counter[2] = self.step_idx + 1
        self._philox.state = {
            "bit_generator": "Philox",
            "state": {"counter": counter, "key": self._philox_key},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen

    # ------------------------------------------------------------------
    # bookkeeping
    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.ids.size

    def index_of(self, vehicle_id: int) -> int:
        hits = np.nonzero(self.ids == vehicle_id)[0]
        if hits.size == 0:
            raise KeyError(f"vehicle {vehicle_id} not present")
        return int(hits[0])

    def present(self, vehicle_id: int) -> bool:
        return bool(np.any(self.ids == vehicle_id))

    def _append_vehicle(self, kind: int, lane: int, pos: float, speed: float) -> int:
        vid = self.next_id
        self.next_id += 1
        self.ids = np.append(self.ids, vid)
        self.kind = np.append(self.kind, np.int8(kind))
        self.lane = np.append(self.lane, int(lane))
        self.pos = np.append(self.pos, float(pos))
        self.speed = np.append(self.speed, float(speed))
        self.accel = np.append(self.accel, 0.0)
        self.length = np.append(self.length, self.cfg.vehicle_length)
        self.lc_timer = np.append(self.lc_timer, 0.0)
        self.lc_target = np.append(self.lc_target, -1)
        self.lc_cooldown = np.append(self.lc_cooldown, 0.0)
        self.energy = np.append(self.energy, 0.0)
        self.depart = np.append(self.depart, self.t)
        self.entry_pos = np.append(self.entry_pos, float(pos))
        self.lane_changes = np.append(self.lane_changes, 0)
        self.spawned_count += 1
        return vid

    def _remove(self, mask: np.ndarray):
        for i in np.nonzero(mask)[0]:
            self.departed.append(DepartedVehicle(
                vehicle_id=int(self.ids[i]), kind=int(self.kind[i]),
                depart_time=float(self.depart[i]), exit_time=self.t,
                energy_wh=float(self.energy[i]),
                distance=float(self.pos[i] - self.entry_pos[i]),
                lane_changes=int(self.lane_changes[i])))
            self.controlled.discard(int(self.ids[i]))
        keep = ~mask
        for name in _FIELDS:
            setattr(self, name, getattr(self, name)[keep])

    # ------------------------------------------------------------------
    # presence: lane occupancy including reservations of changing vehicles
    # ------------------------------------------------------------------
    def _lane_orders(self) -> list[np.ndarray]:
        """Per lane: indices of present vehicles, descending by position."""
        orders = []
        changing = self.lc_timer > 0
        for lane in range(self.cfg.lane_count):
            mask = (self.lane == lane) | (changing & (self.lc_target == lane))
            idx = np.nonzero(mask)[0]
            if idx.size > 1:
                idx = idx[np.argsort(-self.pos[idx], kind="stable")]
            orders.append(idx)
        return orders

    def _lane_tables(self, orders):
        """Ascending-position lookup tables per lane: (pos, speed, rear, idx)."""
        tables = []
        for idx in orders:
            asc = idx[::-1]
            pos = self.pos[asc]
            tables.append((pos, self.speed[asc], pos - self.length[asc], asc))
        return tables

    def _neighbors_in_lane(self, i: int, lane: int, orders) -> tuple[float, float, float, float]:
        """(leader_speed, leader_gap, follower_speed, follower_gap) for vehicle i
        evaluated against a lane's presence, excluding i itself."""
        idx = orders[lane]
        idx = idx[idx != i]
        ls, lg, fs, fg = 0.0, np.inf, 0.0, np.inf
        ahead = idx[self.pos[idx] > self.pos[i]]
        if ahead.size:
            j = ahead[-1]  # orders are descending by pos, so last is nearest
            ls = float(self.speed[j])
            lg = float(self.pos[j] - self.length[j] - self.pos[i])
        behind = idx[self.pos[idx] <= self.pos[i]]
        if behind.size:
            j = behind[0]
            fs = float(self.speed[j])
            fg = float(self.pos[i] - self.length[i] - self.pos[j])
        return ls, lg, fs, fg

    def current_leader(self, i: int, orders=None) -> tuple[float, float]:
        orders = orders if orders is not None else self._lane_orders()
        ls, lg, _, _ = self._neighbors_in_lane(i, int(self.lane[i]), orders)
        return ls, lg

    # ------------------------------------------------------------------
    # signals
    # ------------------------------------------------------------------
    def next_signal_index(self, pos) -> np.ndarray:
        """Index of the nearest stop line at or ahead of pos (len(signals) if none)."""
        if self._stop_lines.size == 0:
            return np.zeros(np.shape(pos), dtype=np.int64)
        return np.searchsorted(self._stop_lines, np.asarray(pos), side="left")

    def _signal_phase_table(self):
        """(is_red, time_to_green, green_left) per signal at current time."""
        phase = (self.t - self._sig_offset) % self._sig_cycle
        green = (phase >= self._sig_green_start) & \
                (phase < self._sig_green_start + self._sig_green_dur)
        ttg = np.where(green, 0.0, (self._sig_green_start - phase) % self._sig_cycle)
        left = np.where(green, self._sig_green_start + self._sig_green_dur - phase, 0.0)
        return ~green, ttg, left

    def _barrier_speed_cap(self, idx: np.ndarray, red_now: np.ndarray,
                           green_left: np.ndarray, leader_cap, leader_rear_stop,
                           dawdle) -> np.ndarray:
        """Safe-speed cap from the next signal for the given vehicles.

        A currently red signal is a stopped virtual leader just short of the
        stop line. A green signal is treated the same unless the vehicle can
        commit to crossing:

        * it can still cross before the phase ends with a step of slack,
          judged at a sustained speed no higher than its current
          leader-constrained safe speed minus one imperfection draw, and
        * its leader, braking as hard as physics allows from this moment,
          would still clear the stop line far enough that the vehicle is not
          stranded on the line at speed.

        Committing on anything more optimistic lets a slowing leader drag
        the vehicle past its own braking point, which is how red-light
        violations happen.
        """
        cfg = self.cfg
        p = cfg.driver
        caps = np.full(idx.size, np.inf)
        if self._stop_lines.size == 0 or idx.size == 0:
            return caps
        sig_idx = self.next_signal_index(self.pos[idx])
        has = sig_idx < self._stop_lines.size
        if not np.any(has):
            return caps
        # beyond this distance the barrier cap exceeds V_max and cannot bind
        horizon = (np.square(cfg.speed_limit + p.decel * p.reaction + cfg.a_max * cfg.dt)
                   / (2.0 * p.decel) + p.min_gap + cfg.speed_limit * cfg.dt)
        near = self._stop_lines[np.minimum(sig_idx, self._stop_lines.size - 1)] \
            - self.pos[idx] <= horizon
        has &= near
        if not np.any(has):
            return caps
        vi = idx[has]
        si = sig_idx[has]
        dist = self._stop_lines[si] - self.pos[vi]
        dawdle = np.asarray(dawdle)
        dawdle_v = dawdle[vi] if dawdle.ndim else dawdle
        v_eff = np.minimum(np.minimum(self.speed[vi] + cfg.a_max * cfg.dt,
                                      np.asarray(leader_cap)[vi]), cfg.speed_limit)
        v_eff = np.maximum(v_eff - dawdle_v, 0.05)
        spare = green_left[si] - dist / v_eff - cfg.dt
        # commits without comfortable spare must keep a one-step abort open:
        # if the estimate slips, the vehicle can still stop next step
        v1 = np.minimum(self.speed[vi] + cfg.a_max * cfg.dt, cfg.speed_limit)
        d1 = dist - (self.speed[vi] + v1) * (cfg.dt / 2.0)
        feasible = (spare >= 0) & ((spare >= 3.0) | _stoppable(v1, d1, p.decel, cfg.dt))
        stranding = np.asarray(leader_rear_stop)[vi] < \
            self._stop_lines[si] + p.min_gap + 0.5
        treat_red = ~feasible | stranding
        # past the braking point on a still-green light, holding speed beats
        # a guaranteed strand on the line
        treat_red &= _stoppable(self.speed[vi], dist, p.decel, cfg.dt)
        treat_red |= red_now[si]
        if np.any(treat_red):
            where_has = np.nonzero(has)[0]
            sub = where_has[treat_red]
            # the barrier sits min_gap short of the line, leaving room for
            # the residual travel of a slowly stranded vehicle
            caps[sub] = following_safe_speed(
                self.speed[idx[sub]], 0.0, dist[treat_red], p, cfg.dt)
        return caps

    # ------------------------------------------------------------------
    # arrivals
    # ------------------------------------------------------------------
    def entry_state(self, lane: int, orders=None) -> tuple[bool, float]:
        """Whether a vehicle can enter this lane now, and its entry speed."""
        cfg = self.cfg
        orders = orders if orders is not None else self._lane_orders()
        idx = orders[lane]
        entry_front = cfg.vehicle_length
        if idx.size == 0:
            return True, cfg.speed_limit
        last = idx[-1]
        clearance = float(self.pos[last] - self.length[last] - entry_front)
        if clearance <= cfg.driver.min_gap:
            return False, 0.0
        v0 = float(min(cfg.speed_limit,
                       following_safe_speed(0.0, self.speed[last], clearance,
                                            cfg.driver, cfg.dt)))
        return v0 >= MIN_ENTRY_SPEED, v0

    def insert_vehicle(self, kind: int, lane: int, controlled: bool = False) -> int | None:
        ok, v0 = self.entry_state(lane)
        if not ok:
            return None
        vid = self._append_vehicle(kind, lane, self.cfg.vehicle_length, v0)
        if controlled:
            self.controlled.add(vid)
        return vid

    def _draw_arrivals(self, rng: np.random.Generator) -> list[tuple[int, int]]:
        """Draw this step's arrival demand. Pure function of (seed, step):
        it must be the first use of the step stream so the departure pattern
        cannot depend on what else is in the world."""
        cfg = self.cfg
        lam = cfg.demand_total / 3600.0 * cfg.dt
        if lam <= 0:
            return []
        count = int(rng.poisson(lam))
        if not count:
            return []
        lanes = rng.integers(0, cfg.lane_count, size=count)
        kinds = rng.random(count) < cfg.cv_share
        return [(int(lane), CV if is_cv else HDV) for lane, is_cv in zip(lanes, kinds)]

    def _insert_arrivals(self, pending: list[tuple[int, int]]):
        cfg = self.cfg
        self.spawn_queue.extend(pending)
        if not self.spawn_queue:
            return
        orders = self._lane_orders()
        still_blocked: deque = deque()
        while self.spawn_queue:
            pref, kind = self.spawn_queue.popleft()
            placed = False
            for probe in range(cfg.lane_count):
                lane = (pref + probe) % cfg.lane_count
                ok, v0 = self.entry_state(lane, orders)
                if ok:
                    vid = self._append_vehicle(kind, lane, cfg.vehicle_length, v0)
                    if kind == CV and self.auto_control_cvs:
                        self.controlled.add(vid)
                    orders = self._lane_orders()
                    placed = True
                    break
            if not placed:
                still_blocked.append((pref, kind))
        self.spawn_queue = still_blocked

    # ------------------------------------------------------------------
    # the step
    # ------------------------------------------------------------------
    def step(self, controls: dict[int, tuple[int, float]] | None = None) -> dict[int, dict]:
        """Advance one dt. ``controls`` maps controlled vehicle id to a raw
        hybrid action (k, x_k); the world applies the mask and clip safety
        layer and reports the realized action per vehicle."""
        cfg = self.cfg
        p = cfg.driver
        dt = cfg.dt
        controls = controls or {}
        info: dict[int, dict] = {}
        if controls:
            if len(controls) <= 8:
                id_to_idx = {}
                for vid in controls:
                    hit = np.nonzero(self.ids == vid)[0]
                    if hit.size:
                        id_to_idx[vid] = int(hit[0])
            else:
                id_to_idx = {int(v): k for k, v in enumerate(self.ids)}
        else:
            id_to_idx = {}

        rng = self._step_rng()
        pending_arrivals = self._draw_arrivals(rng)
        u = rng.random(self.next_id)[self.ids] if (p.sigma > 0 and self.n) else 0.0

        red_now, ttg, green_left = self._signal_phase_table()
        orders = self._lane_orders()
        leader_cap, leader_rear_stop = self._leader_caps(orders)

        # --- lateral decisions -----------------------------------------
        # HDV lane changes: vectorized incentive prefilter, then a scalar
        # confirmation in id order so simultaneous movers see each other.
        changing = self.lc_timer > 0
        controlled_mask = np.zeros(self.n, dtype=bool)
        if self.controlled:
            if len(self.controlled) <= 8:
                for vid in self.controlled:
                    hit = np.nonzero(self.ids == vid)[0]
                    if hit.size:
                        controlled_mask[hit[0]] = True
            else:
                controlled_mask = np.isin(
                    self.ids, np.fromiter(self.controlled, dtype=np.int64))
        # stagger human lane-change scans by id parity: half the fleet per step
        stagger = (self.ids + self.step_idx) % 2 == 0
        eligible = np.nonzero(~changing & (self.lc_cooldown <= 0)
                              & ~controlled_mask & stagger)[0]
        candidates = self._lc_prefilter(eligible, orders, leader_cap)
        lat_changed = False
        stale = False
        for i in sorted(candidates, key=lambda i: int(self.ids[i]))[:MAX_LC_CONFIRMS]:
            if stale:
                orders = self._lane_orders()
                stale = False
            cur = self._neighbors_in_lane(i, int(self.lane[i]), orders)[:2]
            neighbors = {}
            for direction in (-1, 1):
                tgt = int(self.lane[i]) + direction
                if 0 <= tgt < cfg.lane_count:
                    neighbors[direction] = self._neighbors_in_lane(i, tgt, orders)
            if not neighbors:
                continue
            d = hdv_lane_change(float(self.speed[i]), cur, neighbors, p, dt, cfg.speed_limit)
            if d != 0 and not self._merge_strand_hazard(i, int(self.lane[i]) + d, orders):
                self._initiate_lane_change(i, int(self.lane[i]) + d)
                lat_changed = stale = True

        # injected CV lateral requests, masked against the live state
        for vid, (k_raw, _) in controls.items():
            if vid not in id_to_idx:
                continue
            i = id_to_idx[vid]
            k_masked = 0
            if k_raw != 0 and self.lane_change_feasible(i, int(self.lane[i]) + int(k_raw)):
                k_masked = int(k_raw)
                self._initiate_lane_change(i, int(self.lane[i]) + k_masked)
                lat_changed = True
            info[vid] = {"k_raw": int(k_raw), "k": k_masked,
                         "lane_change_initiated": k_masked != 0}

        # --- longitudinal decisions -------------------------------------
        if lat_changed:
            orders = self._lane_orders()
            leader_cap, leader_rear_stop = self._leader_caps(orders)
        sigma_vec = np.where(controlled_mask, 0.0, p.sigma)
        dawdle = sigma_vec * (cfg.a_max * dt)
        barrier = self._barrier_speed_cap(np.arange(self.n), red_now, green_left,
                                          leader_cap, leader_rear_stop, dawdle)
        v_cap = np.minimum(leader_cap, barrier)

        v_des = np.minimum(np.minimum(v_cap, self.speed + cfg.a_max * dt), cfg.speed_limit)
        # kill sub-micron creep: a vehicle pinned against a barrier must reach
        # an exact standstill, not drift across the stop line in float dust
        v_des[v_des < 1e-6] = 0.0
        v_next = np.maximum(v_des - sigma_vec * (cfg.a_max * dt) * u, 0.0)
        accel = np.clip((v_next - self.speed) / dt, cfg.a_min, cfg.a_max)

        # controlled vehicles: clip x_k against the car-following-safe accel
        x_cf_all = np.clip((v_des - self.speed) / dt, cfg.a_min, cfg.a_max)
        for vid, (_, x_raw) in controls.items():
            if vid not in id_to_idx:
                continue
            i = id_to_idx[vid]
            x_cf = float(x_cf_all[i])
            x_dot = min(x_cf, float(x_raw))
            v_new = float(np.clip(self.speed[i] + x_dot * dt, 0.0, cfg.speed_limit))
            accel[i] = (v_new - self.speed[i]) / dt
            info[vid].update({"x_raw": float(x_raw), "x_cf": x_cf, "x_clipped": x_dot})

        # --- kinematics ---------------------------------------------------
        pos_before = self.pos.copy()
        speed_before = self.speed.copy()
        self.accel = accel
        self.pos = self.pos + speed_before * dt + 0.5 * accel * dt * dt
        self.speed = np.clip(speed_before + accel * dt, 0.0, cfg.speed_limit)

        # --- lane-change timers -------------------------------------------
        active = self.lc_timer > 0
        self.lc_timer = np.maximum(self.lc_timer - dt, 0.0)
        self.lc_cooldown = np.maximum(self.lc_cooldown - dt, 0.0)
        finish = active & (self.lc_timer <= 1e-12)
        if np.any(finish):
            self.lane[finish] = self.lc_target[finish]
            self.lc_target[finish] = -1
            self.lc_timer[finish] = 0.0

        # --- energy -------------------------------------------------------
        e_step = np.asarray(energy_step(speed_before, accel, dt, cfg.energy))
        self.energy += e_step

        # --- invariants ----------------------------------------------------
        self._check_red_crossings(pos_before, red_now)
        self._check_collisions(orders)

        if self.record_trajectories:
            for i in range(self.n):
                self.trajectory_rows.append((
                    self.t, int(self.ids[i]), int(self.kind[i]), int(self.lane[i]),
                    float(self.pos[i]), float(self.speed[i]), float(self.accel[i]),
                    float(e_step[i])))

        # per-controlled-vehicle report
        for vid in controls:
            if vid not in id_to_idx:
                info.setdefault(vid, {})["departed"] = True
                continue
            i = id_to_idx[vid]
            info[vid].update({
                "accel": float(self.accel[i]),
                "speed": float(self.speed[i]),
                "pos": float(self.pos[i]),
                "lane": int(self.lane[i]),
                "energy_wh": float(e_step[i]),
                "distance": float(self.pos[i] - pos_before[i]),
            })

        # --- departures and arrivals ---------------------------------------
        self.t += dt
        self.step_idx += 1
        gone = self.pos - self.length >= cfg.length
        if np.any(gone):
            self._remove(gone)
        self._insert_arrivals(pending_arrivals)
        return info

    # ------------------------------------------------------------------
    # lateral helpers
    # ------------------------------------------------------------------
    def _leader_caps(self, orders) -> tuple[np.ndarray, np.ndarray]:
        """Per vehicle: safe-speed cap from leaders in every lane it occupies,
        and the nearest leader's worst-case (full-braking) rear stop position."""
        p = self.cfg.driver
        dt = self.cfg.dt
        caps = np.full(self.n, np.inf)
        rear_stop = np.full(self.n, np.inf)
        pairs = [(idx[1:], idx[:-1]) for idx in orders if idx.size >= 2]
        if not pairs:
            return caps, rear_stop
        fol = np.concatenate([f for f, _ in pairs])
        led = np.concatenate([led for _, led in pairs])
        rear = self.pos[led] - self.length[led]
        vs = following_safe_speed(self.speed[fol], self.speed[led], rear - self.pos[fol], p, dt)
        stops = rear + np.square(self.speed[led]) / (2.0 * p.decel)
        # a vehicle appears at most once per lane; sequential per-lane blocks
        # make repeated fancy-index minima equivalent to minimum.at
        start = 0
        for f, _ in pairs:
            sl = slice(start, start + f.size)
            caps[f] = np.minimum(caps[f], vs[sl])
            rear_stop[f] = np.minimum(rear_stop[f], stops[sl])
            start += f.size
        return caps, rear_stop

    def _lc_prefilter(self, eligible: np.ndarray, orders, leader_cap) -> list[int]:
        """Vehicles whose best adjacent-lane safe-speed gain beats hysteresis.

        Only vehicles meaningfully constrained in their own lane are examined
        (an unconstrained vehicle cannot gain more than the hysteresis), and
        the adjacent-lane scan is vectorized per (lane, direction) group.
        Survivors get the exact scalar decision afterwards.
        """
        if eligible.size == 0:
            return []
        cfg = self.cfg
        p = cfg.driver
        vmax = cfg.speed_limit
        cur_safe_all = np.minimum(leader_cap[eligible], vmax)
        cand = eligible[cur_safe_all < vmax - p.lc_hysteresis]
        if cand.size == 0:
            return []
        tables = self._lane_tables(orders)

        def leaders_for(sub: np.ndarray, lane: int):
            pos_asc, spd_asc, rear_asc, _ = tables[lane]
            ls = np.zeros(sub.size)
            lg = np.full(sub.size, np.inf)
            if pos_asc.size:
                j = np.searchsorted(pos_asc, self.pos[sub], side="right")
                has = j < pos_asc.size
                ls[has] = spd_asc[j[has]]
                lg[has] = rear_asc[j[has]] - self.pos[sub[has]]
            return ls, lg

        # gather every (candidate, adjacent lane) pair, run one batched call
        groups = []
        for lane in range(cfg.lane_count):
            sub = cand[self.lane[cand] == lane]
            if sub.size == 0:
                continue
            for direction in (-1, 1):
                tgt = lane + direction
                if 0 <= tgt < cfg.lane_count:
                    tls, tlg = leaders_for(sub, tgt)
                    groups.append((sub, tls, tlg))
        if not groups:
            return []
        all_sub = np.concatenate([g[0] for g in groups])
        all_ls = np.concatenate([g[1] for g in groups])
        all_lg = np.concatenate([g[2] for g in groups])
        tgt_safe = np.minimum(
            following_safe_speed(self.speed[all_sub], all_ls, all_lg, p, cfg.dt), vmax)
        gain = tgt_safe - np.minimum(leader_cap[all_sub], vmax)
        return sorted(set(int(i) for i in all_sub[gain > p.lc_hysteresis]))

    def lane_change_feasible(self, i: int, target_lane: int) -> bool:
        """Gap acceptance for vehicle i moving to target_lane right now."""
        if not 0 <= target_lane < self.cfg.lane_count:
            return False
        if self.lc_timer[i] > 0:
            return False
        orders = self._lane_orders()
        ls, lg, fs, fg = self._neighbors_in_lane(i, target_lane, orders)
        if not gap_check(float(self.speed[i]), ls, lg, fs, fg, self.cfg.driver, self.cfg.dt):
            return False
        return not self._merge_strand_hazard(i, target_lane, orders)

    def _next_line_dist(self, pos: float) -> float:
        if self._stop_lines.size == 0:
            return np.inf
        j = int(np.searchsorted(self._stop_lines, pos, side="left"))
        if j >= self._stop_lines.size:
            return np.inf
        return float(self._stop_lines[j] - pos)

    def _merge_strand_hazard(self, i: int, target_lane: int, orders) -> bool:
        """Veto lane changes that would strand someone on a stop line.

        A vehicle committed to crossing on green stays safe because no
        leader maneuver with accel >= -b can pull the leader's worst-case
        stop point backwards. A lane change is the one event that swaps in a
        new leader with a closer stop point, so a merge in front of a
        committed follower (or under a slow new leader while the mover is
        itself committed) is refused.
        """
        cfg = self.cfg
        p = cfg.driver
        if self._stop_lines.size == 0:
            return False

        def committed(speed: float, dline: float) -> bool:
            zone = speed * p.reaction + speed * speed / (2.0 * p.decel) \
                + 2.0 * cfg.dt * speed + 5.0
            return dline < zone

        my_rear_stop = float(self.pos[i] - self.length[i]
                             + self.speed[i] ** 2 / (2.0 * p.decel))
        ls, lg, fs, fg = self._neighbors_in_lane(i, target_lane, orders)
        if np.isfinite(fg):
            f_pos = float(self.pos[i] - self.length[i] - fg)
            dline = self._next_line_dist(f_pos)
            if np.isfinite(dline) and committed(fs, dline) \
                    and my_rear_stop < f_pos + dline + p.min_gap + 0.5:
                return True
        if np.isfinite(lg):
            leader_stop = float(self.pos[i] + lg + ls * ls / (2.0 * p.decel))
            dline_me = self._next_line_dist(float(self.pos[i]))
            if np.isfinite(dline_me) and committed(float(self.speed[i]), dline_me) \
                    and leader_stop < self.pos[i] + dline_me + p.min_gap + 0.5:
                return True
        return False

    def _initiate_lane_change(self, i: int, target_lane: int):
        self.lc_timer[i] = self.cfg.lane_change_duration
        self.lc_target[i] = target_lane
        self.lc_cooldown[i] = self.cfg.lane_change_duration + LC_COOLDOWN
        self.lane_changes[i] += 1

    def cf_accel(self, i: int) -> float:
        """Deterministic car-following acceleration for vehicle i (the clip
        reference x_CF): leader and signal constraints, sigma = 0."""
        cfg = self.cfg
        orders = self._lane_orders()
        caps = []
        lanes = {int(self.lane[i])}
        if self.lc_timer[i] > 0:
            lanes.add(int(self.lc_target[i]))
        rear_stop = np.inf
        for lane in lanes:
            ls, lg, _, _ = self._neighbors_in_lane(i, lane, orders)
            caps.append(float(following_safe_speed(self.speed[i], ls, lg, cfg.driver, cfg.dt)))
            if np.isfinite(lg):
                rear_stop = min(rear_stop,
                                self.pos[i] + lg + ls * ls / (2.0 * cfg.driver.decel))
        red_now, _, green_left = self._signal_phase_table()
        leader_cap = np.full(self.n, np.inf)
        leader_cap[i] = min(caps)
        leader_rear_stop = np.full(self.n, np.inf)
        leader_rear_stop[i] = rear_stop
        barrier = self._barrier_speed_cap(np.array([i]), red_now, green_left,
                                          leader_cap, leader_rear_stop, 0.0)
        caps.append(float(barrier[0]))
        v_des = min(min(caps), float(self.speed[i]) + cfg.a_max * cfg.dt, cfg.speed_limit)
        if v_des < 1e-6:
            v_des = 0.0
        return float(np.clip((v_des - self.speed[i]) / cfg.dt, cfg.a_min, cfg.a_max))

    # ------------------------------------------------------------------
    # invariant checks
    # ------------------------------------------------------------------
    def _check_collisions(self, orders):
        for idx in orders:
            if idx.size < 2:
                continue
            gaps = self.pos[idx[:-1]] - self.length[idx[:-1]] - self.pos[idx[1:]]
            bad = np.nonzero(gaps < -1e-9)[0]
            if bad.size:
                j = bad[0]
                raise CollisionFault(int(self.ids[idx[j]]), int(self.ids[idx[j + 1]]), self.t)

    def _check_red_crossings(self, pos_before, red_now):
        if self._stop_lines.size == 0:
            return
        for j, line in enumerate(self._stop_lines):
            if not red_now[j]:
                continue
            crossed = (pos_before <= line) & (self.pos > line)
            for i in np.nonzero(crossed)[0]:
                self.red_crossings.append((int(self.ids[i]), self.t))

    # ------------------------------------------------------------------
    def vehicle_counts(self) -> dict:
        return {"present": self.n, "spawned": self.spawned_count,
                "departed": len(self.departed), "queued": len(self.spawn_queue)}
