"""DDPG baseline: learned longitudinal control, rule-based lane changes.

The critic shares the Q-network architecture with the scalar acceleration
joining at the concat, the actor mirrors the action-parameter network with
one output. Lateral decisions come from the human lane-change model each
step; the lane-change reward penalty is dropped for this controller.
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
from .exploration import ExplorationState, OUNoise
from .nets import bounds_grad, param_network, q_network, scale_to_bounds
from .prl import AgentConfig
from .replay import ReplayBuffer


class DDPGAgent:
    name = "ddpg"

    def __init__(self, scenario: ScenarioConfig, config: AgentConfig | None = None,
                 seed: int = 0):
        self.scenario = scenario
        self.config = config or AgentConfig()
        self.seed = seed
        self.gshape = obs_grid_shape(scenario)
        self.logic_len = logic_feature_length(scenario)

        rng = np.random.default_rng([seed, 37])
        self.critic = q_network(self.gshape, self.logic_len, 1, 1, rng)
        self.actor = param_network(self.gshape, self.logic_len, 1, rng)
        self.critic_target = q_network(self.gshape, self.logic_len, 1, 1,
                                       np.random.default_rng(0))
        self.actor_target = param_network(self.gshape, self.logic_len, 1,
                                          np.random.default_rng(0))
        copy_weights(self.critic_target, self.critic)
        copy_weights(self.actor_target, self.actor)
        self.critic_opt = make_optimizer(self.config.optimizer, self.critic,
                                         self.config.lr_q)
        self.actor_opt = make_optimizer(self.config.optimizer, self.actor,
                                        self.config.lr_mu)
        self.exploration = ExplorationState(self.config.eps_init, self.config.eps_end,
                                            self.config.decay_episodes)
        sigma = self.config.ou_sigma
        if sigma is None:
            sigma = 0.2 * (scenario.a_max - scenario.a_min) / 2.0
        self.ou = OUNoise(dim=1, theta=self.config.ou_theta, sigma=sigma)
        self.buffer = ReplayBuffer(self.config.buffer_capacity, self.gshape,
                                   self.logic_len)
        self.episodes_trained = 0

    def _features(self, obs):
        grid, logic = obs
        return (grid.astype(np.float64)[None, :, :, None],
                logic.features(self.scenario)[None, :])

    def begin_episode(self, episode_index: int, rng=None):
        self.exploration.begin_episode(episode_index)
        self.ou.reset()

    def act(self, obs, explore: bool, rng: np.random.Generator, env=None):
        grid_b, logic_b = self._features(obs)
        t = self.actor.forward(grid_b, logic_b, keep_cache=False)[0, 0]
        accel = float(scale_to_bounds(t, self.scenario.a_min, self.scenario.a_max))
        if explore:
            noise = float(self.ou.step(rng, scale=self.exploration.noise_scale())[0])
            accel = float(np.clip(accel + noise,
                                  self.scenario.a_min, self.scenario.a_max))
        k = env.rule_lane_decision() if env is not None else 0
        return k, accel

    def record(self, obs, action, reward, next_obs, done: bool):
        grid, logic = obs
        k, accel = action
        if next_obs is None:
            ngrid, nlogic_f = grid, logic.features(self.scenario)
        else:
            ngrid = next_obs[0]
            nlogic_f = next_obs[1].features(self.scenario)
        self.buffer.add(grid, logic.features(self.scenario), k, accel, reward,
                        ngrid, nlogic_f, done)

    def learn(self, rng: np.random.Generator):
        cfg = self.config
        if len(self.buffer) < cfg.batch_size:
            return None
        batch = self.buffer.sample(rng, cfg.batch_size)
        b = cfg.batch_size
        a_min, a_max = self.scenario.a_min, self.scenario.a_max

        # critic regression onto the target policy's value
        t2 = self.actor_target.forward(batch["next_grid"], batch["next_logic"],
                                       keep_cache=False)
        a2 = scale_to_bounds(t2, a_min, a_max)
        q2 = self.critic_target.forward(batch["next_grid"], batch["next_logic"], a2,
                                        keep_cache=False)[:, 0]
        y = batch["reward"] + cfg.gamma * ~batch["done"] * q2
        q_pred = self.critic.forward(batch["grid"], batch["logic"],
                                     batch["x"][:, None])[:, 0]
        resid = q_pred - y
        critic_loss = 0.5 * float(np.mean(resid ** 2))
        self.critic.backward((resid / b)[:, None], accumulate=True)

        # actor ascends the critic; critic weights stay frozen
        t_pi = self.actor.forward(batch["grid"], batch["logic"])
        a_pi = scale_to_bounds(t_pi, a_min, a_max)
        q_pi = self.critic.forward(batch["grid"], batch["logic"], a_pi)
        actor_loss = -float(np.mean(q_pi[:, 0]))
        _, extras = self.critic.backward(np.full_like(q_pi, -1.0 / b),
                                         accumulate=False)
        self.actor.backward(extras[1] * bounds_grad(a_min, a_max), accumulate=True)

        if cfg.grad_clip > 0:
            clip_grad_norm(self.critic, cfg.grad_clip)
            clip_grad_norm(self.actor, cfg.grad_clip)
        self.critic_opt.step()
        self.actor_opt.step()
        soft_update(self.critic_target, self.critic, cfg.tau_q)
        soft_update(self.actor_target, self.actor, cfg.tau_mu)
        return {"q_loss": critic_loss, "actor_loss": actor_loss}

    def state_payload(self) -> dict:
        return {
            "kind": self.name,
            "config": self.config.to_dict(),
            "scenario_grid": list(self.gshape),
            "logic_len": self.logic_len,
            "episodes_trained": self.episodes_trained,
            "exploration": self.exploration.to_dict(),
            "nets": {
                "critic": {"spec": self.critic.specs(), "tensors": net_state(self.critic)},
                "actor": {"spec": self.actor.specs(), "tensors": net_state(self.actor)},
                "critic_target": {"tensors": net_state(self.critic_target)},
                "actor_target": {"tensors": net_state(self.actor_target)},
            },
        }

    def load_payload(self, payload: dict):
        if payload.get("kind") != self.name:
            raise ValueError(f"checkpoint is for {payload.get('kind')!r}, not {self.name!r}")
        nets = payload["nets"]
        load_net_state(self.critic, nets["critic"]["tensors"])
        load_net_state(self.actor, nets["actor"]["tensors"])
        load_net_state(self.critic_target, nets["critic_target"]["tensors"])
        load_net_state(self.actor_target, nets["actor_target"]["tensors"])
        self.episodes_trained = payload.get("episodes_trained", 0)
        self.exploration = ExplorationState.from_dict(payload["exploration"])
