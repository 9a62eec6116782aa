from .ddpg import DDPGAgent
from .dqn import DQNAgent, build_dqn_actions
from .exploration import ExplorationState, OUNoise, epsilon_schedule
from .loop import EpisodeStats, episode_seed, rollout, smooth, train_agent
from .nets import (
    K_VALUES,
    bounds_grad,
    conv_trunk,
    param_network,
    plain_q_network,
    q_network,
    scale_to_bounds,
    trunk_features,
)
from .prl import AgentConfig, PRLAgent
from .replay import ReplayBuffer

AGENT_KINDS = {
    "prl": PRLAgent,
    "dqn": DQNAgent,
    "ddpg": DDPGAgent,
}


def make_agent(kind: str, scenario, config: AgentConfig | None = None, seed: int = 0):
    if kind not in AGENT_KINDS:
        raise ValueError(f"unknown controller {kind!r}; pick one of {sorted(AGENT_KINDS)}")
    return AGENT_KINDS[kind](scenario, config, seed)


__all__ = [
    "AGENT_KINDS", "AgentConfig", "DDPGAgent", "DQNAgent", "EpisodeStats",
    "ExplorationState", "K_VALUES", "OUNoise", "PRLAgent", "ReplayBuffer",
    "bounds_grad", "build_dqn_actions", "conv_trunk", "episode_seed",
    "epsilon_schedule", "make_agent", "param_network", "plain_q_network",
    "q_network", "rollout", "scale_to_bounds", "smooth", "train_agent",
    "trunk_features",
]
