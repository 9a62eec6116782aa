"""Shared episodic training loop and evaluation rollouts.

All agents implement the same protocol: begin_episode, act, record, learn.
The loop runs one gradient step per environment step once the replay holds
a full batch, and tracks per-episode energy, travel time, and return, with
the 0.98/0.02 exponential smoothing used for the training curves.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class EpisodeStats:
    episode: int
    energy_wh: float
    travel_time: float
    episode_return: float
    reason: str
    epsilon: float
    steps: int
    smoothed_energy_wh: float = 0.0
    smoothed_travel_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def episode_seed(base_seed: int, episode: int) -> int:
    return base_seed * 1_000_003 + episode


def smooth(curves: list[EpisodeStats]) -> None:
    """In-place: smoothed_k = 0.98 * smoothed_{k-1} + 0.02 * raw_k."""
    sm_e = sm_t = None
    for row in curves:
        if sm_e is None:
            sm_e, sm_t = row.energy_wh, row.travel_time
        else:
            sm_e = 0.98 * sm_e + 0.02 * row.energy_wh
            sm_t = 0.98 * sm_t + 0.02 * row.travel_time
        row.smoothed_energy_wh = sm_e
        row.smoothed_travel_time = sm_t


def train_agent(agent, env, episodes: int, seed: int,
                progress=None) -> list[EpisodeStats]:
    """Run the full training protocol and return per-episode curves."""
    rng = np.random.default_rng([seed, 71])
    curves: list[EpisodeStats] = []
    for ep in range(1, episodes + 1):
        agent.begin_episode(ep, rng)
        obs = env.reset(seed=episode_seed(seed, ep))
        done = False
        steps = 0
        while not done:
            action = agent.act(obs, explore=True, rng=rng, env=env)
            next_obs, reward, done, _ = env.step(action)
            agent.record(obs, action, reward, next_obs, done)
            agent.learn(rng)
            obs = next_obs
            steps += 1
        rec = env.record
        curves.append(EpisodeStats(
            episode=ep, energy_wh=rec.energy_wh, travel_time=rec.travel_time,
            episode_return=rec.episode_return, reason=rec.reason,
            epsilon=agent.exploration.epsilon, steps=steps))
        agent.episodes_trained = ep
        if progress is not None:
            progress(curves[-1])
    smooth(curves)
    return curves


def rollout(agent, env, seed: int, record_trajectories: bool = False):
    """One evaluation episode: greedy discrete choice, no exploration noise."""
    rng = np.random.default_rng([seed, 977])
    obs = env.reset(seed=seed, record_trajectories=record_trajectories)
    done = False
    while not done:
        action = agent.act(obs, explore=False, rng=rng, env=env)
        obs, _, done, _ = env.step(action)
    return env.record
