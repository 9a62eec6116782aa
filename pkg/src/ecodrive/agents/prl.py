"""Parameterized deep Q-learning over the hybrid lane/acceleration action.

Two networks: a Q network scoring every discrete lane decision given the
state and the full vector of continuous action parameters, and a
deterministic parameter network producing that vector. Training follows the
replay + twin-target pattern: the Q loss regresses the taken action's value
onto r + gamma * max_k Q'(s', x'(s')), and the parameter loss ascends
sum_k Q(s, k, x_k(s)) with the Q weights frozen, gradients flowing through
the action-parameter input.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

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
from .exploration import ExplorationState, OUNoise
from .nets import K_VALUES, bounds_grad, param_network, q_network, scale_to_bounds
from .replay import ReplayBuffer


@dataclass
class AgentConfig:
    gamma: float = 0.99
    tau_q: float = 1e-2          # target averaging for the Q network
    tau_mu: float = 1e-3         # target averaging for the parameter network
    lr_q: float = 1e-4
    lr_mu: float = 1e-5
    eps_init: float = 1.0
    eps_end: float = 0.01
    decay_episodes: int = 1000
    batch_size: int = 128
    buffer_capacity: int = 500_000
    optimizer: str = "sgd"       # the literal gradient step; "adam" available
    grad_clip: float = 10.0      # global norm; 0 disables
    ou_theta: float = 0.15
    ou_sigma: float | None = None  # default 0.2 * (a_max - a_min) / 2

    def to_dict(self) -> dict:
        return asdict(self)


class PRLAgent:
    name = "prl"

    def __init__(self, scenario: ScenarioConfig, config: AgentConfig | None = None,
                 seed: int = 0):
        self.scenario = scenario
        self.config = config or AgentConfig()
        self.seed = seed
        self.n_actions = len(K_VALUES)
        self.gshape = obs_grid_shape(scenario)
        self.logic_len = logic_feature_length(scenario)

        rng = np.random.default_rng([seed, 11])
        self.q = q_network(self.gshape, self.logic_len, self.n_actions,
                           self.n_actions, rng)
        self.mu = param_network(self.gshape, self.logic_len, self.n_actions, rng)
        self.q_target = q_network(self.gshape, self.logic_len, self.n_actions,
                                  self.n_actions, np.random.default_rng(0))
        self.mu_target = param_network(self.gshape, self.logic_len, self.n_actions,
                                       np.random.default_rng(0))
        copy_weights(self.q_target, self.q)
        copy_weights(self.mu_target, self.mu)

        self.q_opt = make_optimizer(self.config.optimizer, self.q, self.config.lr_q)
        self.mu_opt = make_optimizer(self.config.optimizer, self.mu, self.config.lr_mu)

        self.exploration = ExplorationState(self.config.eps_init, self.config.eps_end,
                                            self.config.decay_episodes)
        sigma = self.config.ou_sigma
        if sigma is None:
            sigma = 0.2 * (scenario.a_max - scenario.a_min) / 2.0
        self.ou = OUNoise(dim=self.n_actions, theta=self.config.ou_theta, sigma=sigma)
        self.buffer = ReplayBuffer(self.config.buffer_capacity, self.gshape,
                                   self.logic_len)
        self.episodes_trained = 0

    # ------------------------------------------------------------------
    # observation plumbing
    # ------------------------------------------------------------------
    def _features(self, obs) -> tuple[np.ndarray, np.ndarray]:
        grid, logic = obs
        return (grid.astype(np.float64)[None, :, :, None],
                logic.features(self.scenario)[None, :])

    def param_values(self, grid_b: np.ndarray, logic_b: np.ndarray,
                     net=None) -> np.ndarray:
        """Action-parameter vector per state, mapped onto [a_min, a_max]."""
        net = net or self.mu
        t = net.forward(grid_b, logic_b, keep_cache=False)
        return scale_to_bounds(t, self.scenario.a_min, self.scenario.a_max)

    def q_values(self, grid_b, logic_b, x_b, net=None) -> np.ndarray:
        net = net or self.q
        return net.forward(grid_b, logic_b, x_b, keep_cache=False)

    # ------------------------------------------------------------------
    # acting
    # ------------------------------------------------------------------
    def begin_episode(self, episode_index: int, rng: np.random.Generator | None = None):
        self.exploration.begin_episode(episode_index)
        self.ou.reset()

    def act(self, obs, explore: bool, rng: np.random.Generator, env=None):
        grid_b, logic_b = self._features(obs)
        x = self.param_values(grid_b, logic_b)[0]
        if explore:
            noise = self.ou.step(rng, scale=self.exploration.noise_scale())
            x = np.clip(x + noise, self.scenario.a_min, self.scenario.a_max)
        if explore and rng.random() < self.exploration.epsilon:
            k_idx = int(rng.integers(self.n_actions))
        else:
            q = self.q_values(grid_b, logic_b, x[None, :])[0]
            k_idx = int(np.argmax(q))
        return K_VALUES[k_idx], float(x[k_idx])

    # ------------------------------------------------------------------
    # learning
    # ------------------------------------------------------------------
    def record(self, obs, action, reward, next_obs, done: bool):
        grid, logic = obs
        k, x = action
        if next_obs is None:
            ngrid, nlogic_f = grid, logic.features(self.scenario)
        else:
            ngrid = next_obs[0]
            nlogic_f = next_obs[1].features(self.scenario)
        self.buffer.add(grid, logic.features(self.scenario), k, x, reward,
                        ngrid, nlogic_f, done)

    def td_targets(self, batch: dict) -> np.ndarray:
        x2 = self.param_values(batch["next_grid"], batch["next_logic"],
                               net=self.mu_target)
        q2 = self.q_values(batch["next_grid"], batch["next_logic"], x2,
                           net=self.q_target)
        return batch["reward"] + self.config.gamma * ~batch["done"] * q2.max(axis=1)

    def learn(self, rng: np.random.Generator):
        cfg = self.config
        if len(self.buffer) < cfg.batch_size:
            return None
        batch = self.buffer.sample(rng, cfg.batch_size)
        b = cfg.batch_size
        rows = np.arange(b)
        k_idx = np.searchsorted(K_VALUES, batch["k"])
        y = self.td_targets(batch)

        # Q loss: fill the non-taken parameter slots from the current policy
        # (detached), overwrite the taken slot with the stored value
        x_fill = self.param_values(batch["grid"], batch["logic"])
        x_fill[rows, k_idx] = batch["x"]
        q_pred = self.q.forward(batch["grid"], batch["logic"], x_fill)
        resid = q_pred[rows, k_idx] - y
        q_loss = 0.5 * float(np.mean(resid ** 2))
        gout = np.zeros_like(q_pred)
        gout[rows, k_idx] = resid / b
        self.q.backward(gout, accumulate=True)

        # parameter loss: -sum_k Q(s, k, x_k(s)); Q weights stay frozen
        tanh_out = self.mu.forward(batch["grid"], batch["logic"])
        x_pi = scale_to_bounds(tanh_out, self.scenario.a_min, self.scenario.a_max)
        q_pi = self.q.forward(batch["grid"], batch["logic"], x_pi)
        param_loss = -float(np.mean(q_pi.sum(axis=1)))
        _, extras = self.q.backward(np.full_like(q_pi, -1.0 / b), accumulate=False)
        g_x = extras[1] * bounds_grad(self.scenario.a_min, self.scenario.a_max)
        self.mu.backward(g_x, accumulate=True)

        if cfg.grad_clip > 0:
            clip_grad_norm(self.q, cfg.grad_clip)
            clip_grad_norm(self.mu, cfg.grad_clip)
        self.q_opt.step()
        self.mu_opt.step()
        soft_update(self.q_target, self.q, cfg.tau_q)
        soft_update(self.mu_target, self.mu, cfg.tau_mu)
        return {"q_loss": q_loss, "param_loss": param_loss}

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------
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
                "mu": {"spec": self.mu.specs(), "tensors": net_state(self.mu)},
                "q_target": {"tensors": net_state(self.q_target)},
                "mu_target": {"tensors": net_state(self.mu_target)},
            },
        }

    def load_payload(self, payload: dict):
        if payload.get("kind") != self.name:
            raise ValueError(f"checkpoint is for {payload.get('kind')!r}, not {self.name!r}")
        if list(payload["scenario_grid"]) != list(self.gshape) \
                or payload["logic_len"] != self.logic_len:
            from ..errors import ConfigurationError
            raise ConfigurationError(
                "checkpoint observation shape does not match the scenario "
                f"(checkpoint {payload['scenario_grid']}+{payload['logic_len']}, "
                f"scenario {list(self.gshape)}+{self.logic_len})")
        nets = payload["nets"]
        load_net_state(self.q, nets["q"]["tensors"])
        load_net_state(self.mu, nets["mu"]["tensors"])
        load_net_state(self.q_target, nets["q_target"]["tensors"])
        load_net_state(self.mu_target, nets["mu_target"]["tensors"])
        self.episodes_trained = payload.get("episodes_trained", 0)
        self.exploration = ExplorationState.from_dict(payload["exploration"])
