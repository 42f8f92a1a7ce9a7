"""Hybrid DDPG / double-DQN agent for joint clustering and beamforming."""

from .agents import (
    AgentBundle,
    Hyperparams,
    TrainingDiverged,
    TrainingLog,
    TrainingResult,
    ddpg_update,
    ddqn_update,
    polyak_update,
    smoothed,
    train_hybrid,
)
from .env import CellFreeEnv, EnvConfig, EnvState, HybridAction, env_step, normalize_state
from .evaluate import OraclePolicy, RandomPolicy, compare_policy, mean_ratio
from .nn import SGD, Adam, DenseNet, finite_difference_check
from .replay import Batch, ReplayBuffer

__all__ = [
    "Adam", "AgentBundle", "Batch", "CellFreeEnv", "DenseNet", "EnvConfig", "EnvState", "HybridAction",
    "Hyperparams", "OraclePolicy", "RandomPolicy", "ReplayBuffer", "SGD", "TrainingDiverged", "TrainingLog",
    "TrainingResult", "compare_policy", "ddpg_update", "ddqn_update", "env_step", "finite_difference_check",
    "mean_ratio", "normalize_state", "polyak_update", "smoothed", "train_hybrid",
]
