"""DQN baseline over the flattened 27-action space.

The hybrid action is discretized: nine acceleration levels (quarters of
a_max down through quarters of a_min) crossed with the three lane
decisions. Training is standard replay + target network with the same
hyperparameters and trunk architecture as the parameterized agent.
"""

from __future__ import annotations

import numpy as np

from ..env.observation import grid_shape as obs_grid_shape
from ..env.observation import logic_feature_length
from ..nn import (
    clip_grad_norm,
    copy_weights,
    load_net_state,
    make_optimizer,
    net_state,
    soft_update,
)
from ..sim.params import ScenarioConfig
from .exploration import ExplorationState
from .nets import K_VALUES, plain_q_network
from .prl import AgentConfig
from .replay import ReplayBuffer


def build_dqn_actions(a_min: float, a_max: float) -> list[tuple[int, float]]:
    """{1.0, 0.75, 0.5, 0.25} * a_max, 0, {0.25, 0.5, 0.75, 1.0} * a_min,
    crossed with the three lane decisions: 27 pairs."""
    levels = [1.0 * a_max, 0.75 * a_max, 0.5 * a_max, 0.25 * a_max, 0.0,
              0.25 * a_min, 0.5 * a_min, 0.75 * a_min, 1.0 * a_min]
    return [(k, level) for k in K_VALUES for level in levels]


class DQNAgent:
    name = "dqn"

    def __init__(self, scenario: ScenarioConfig, config: AgentConfig | None = None,
                 seed: int = 0):
        self.scenario = scenario
        self.config = config or AgentConfig()
        self.seed = seed
        self.actions = build_dqn_actions(scenario.a_min, scenario.a_max)
        self.n_actions = len(self.actions)
        self.gshape = obs_grid_shape(scenario)
        self.logic_len = logic_feature_length(scenario)

        rng = np.random.default_rng([seed, 23])
        self.q = plain_q_network(self.gshape, self.logic_len, self.n_actions, rng)
        self.q_target = plain_q_network(self.gshape, self.logic_len, self.n_actions,
                                        np.random.default_rng(0))
        copy_weights(self.q_target, self.q)
        self.q_opt = make_optimizer(self.config.optimizer, self.q, self.config.lr_q)
        self.exploration = ExplorationState(self.config.eps_init, self.config.eps_end,
                                            self.config.decay_episodes)
        self.buffer = ReplayBuffer(self.config.buffer_capacity, self.gshape,
                                   self.logic_len)
        self.episodes_trained = 0

    def _features(self, obs):
        grid, logic = obs
        return (grid.astype(np.float64)[None, :, :, None],
                logic.features(self.scenario)[None, :])

    def begin_episode(self, episode_index: int, rng=None):
        self.exploration.begin_episode(episode_index)

    def act(self, obs, explore: bool, rng: np.random.Generator, env=None):
        if explore and rng.random() < self.exploration.epsilon:
            idx = int(rng.integers(self.n_actions))
        else:
            grid_b, logic_b = self._features(obs)
            q = self.q.forward(grid_b, logic_b, keep_cache=False)[0]
            idx = int(np.argmax(q))
        self._last_action_index = idx
        return self.actions[idx]

    def record(self, obs, action, reward, next_obs, done: bool):
        grid, logic = obs
        if next_obs is None:
            ngrid, nlogic_f = grid, logic.features(self.scenario)
        else:
            ngrid = next_obs[0]
            nlogic_f = next_obs[1].features(self.scenario)
        # the replay's k slot holds the flat action index
        self.buffer.add(grid, logic.features(self.scenario),
                        self._last_action_index, 0.0, reward, ngrid, nlogic_f, done)

    def learn(self, rng: np.random.Generator):
        cfg = self.config
        if len(self.buffer) < cfg.batch_size:
            return None
        batch = self.buffer.sample(rng, cfg.batch_size)
        b = cfg.batch_size
        rows = np.arange(b)
        idx = batch["k"].astype(np.int64)

        q2 = self.q_target.forward(batch["next_grid"], batch["next_logic"],
                                   keep_cache=False)
        y = batch["reward"] + cfg.gamma * ~batch["done"] * q2.max(axis=1)
        q_pred = self.q.forward(batch["grid"], batch["logic"])
        resid = q_pred[rows, idx] - y
        loss = float(np.mean(resid ** 2))
        gout = np.zeros_like(q_pred)
        gout[rows, idx] = 2.0 * resid / b
        self.q.backward(gout, accumulate=True)
        if cfg.grad_clip > 0:
            clip_grad_norm(self.q, cfg.grad_clip)
        self.q_opt.step()
        soft_update(self.q_target, self.q, cfg.tau_q)
        return {"q_loss": loss}

    def state_payload(self) -> dict:
        return {
            "kind": self.name,
            "config": self.config.to_dict(),
            "scenario_grid": list(self.gshape),
            "logic_len": self.logic_len,
            "episodes_trained": self.episodes_trained,
            "exploration": self.exploration.to_dict(),
            "nets": {
                "q": {"spec": self.q.specs(), "tensors": net_state(self.q)},
                "q_target": {"tensors": net_state(self.q_target)},
            },
        }

    def load_payload(self, payload: dict):
        if payload.get("kind") != self.name:
            raise ValueError(f"checkpoint is for {payload.get('kind')!r}, not {self.name!r}")
        load_net_state(self.q, payload["nets"]["q"]["tensors"])
        load_net_state(self.q_target, payload["nets"]["q_target"]["tensors"])
        self.episodes_trained = payload.get("episodes_trained", 0)
        self.exploration = ExplorationState.from_dict(payload["exploration"])
