from .env import EcoDriveEnv, EpisodeRecord, StepLog
from .observation import (
    LogicState,
    build_logic_state,
    build_occupancy_grid,
    grid_shape,
    logic_feature_length,
)
from .reward import RewardConfig, compute_reward, step_penalties
from .safety import clip_action, mask_lane_change

__all__ = [
    "EcoDriveEnv", "EpisodeRecord", "LogicState", "RewardConfig", "StepLog",
    "build_logic_state", "build_occupancy_grid", "clip_action", "compute_reward",
    "grid_shape", "logic_feature_length", "mask_lane_change", "step_penalties",
]
