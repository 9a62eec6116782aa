"""Exploration machinery: the linear epsilon decay and Ornstein-Uhlenbeck noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def epsilon_schedule(n_step: int, eps_init: float, eps_end: float, decay_episodes: int) -> float:
    """(eps_init - eps_end) * max((N - n) / N, 0) + eps_end."""
    frac = max((decay_episodes - n_step) / decay_episodes, 0.0)
    return (eps_init - eps_end) * frac + eps_end


@dataclass
class OUNoise:
    """Mean-reverting noise, one state per continuous dimension."""
    dim: int
    theta: float = 0.15
    sigma: float = 0.7      # 0.2 * (a_max - a_min) / 2 for the default bounds
    mu: float = 0.0
    dt: float = 1.0
    state: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def reset(self):
        self.state = np.full(self.dim, self.mu, dtype=np.float64)

    def step(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        if self.state.size != self.dim:
            self.reset()
        sigma = self.sigma * scale
        self.state = (self.state
                      + self.theta * (self.mu - self.state) * self.dt
                      + sigma * np.sqrt(self.dt) * rng.standard_normal(self.dim))
        return self.state.copy()


@dataclass
class ExplorationState:
    eps_init: float = 1.0
    eps_end: float = 0.01
    decay_episodes: int = 1000
    n_step: int = 0          # episode counter driving the decay
    epsilon: float = 1.0

    def begin_episode(self, episode_index: int) -> float:
        self.n_step = episode_index
        self.epsilon = epsilon_schedule(self.n_step, self.eps_init, self.eps_end,
                                        self.decay_episodes)
        return self.epsilon

    def noise_scale(self) -> float:
        """Anneal continuous-action noise to zero over the decay horizon."""
        return max((self.decay_episodes - self.n_step) / self.decay_episodes, 0.0)

    def to_dict(self) -> dict:
        return {"eps_init": self.eps_init, "eps_end": self.eps_end,
                "decay_episodes": self.decay_episodes, "n_step": self.n_step,
                "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "ExplorationState":
        return cls(**d)
