"""Simulated environment: fixed topology, fresh fading every step.

The state is the per-user SINR produced by the previous action. The reward
is the configured objective (log2 rates) minus a penalty on SIC-constraint
violations, measured as normalized slacks.
"""

from dataclasses import dataclass, field

import numpy as np

from ..channel import Network, ScenarioConfig
from ..clustering import DEFAULT_ACTION_CAP, enumerate_configs
from ..optimize import (
    DEFAULT_SIC_SENSITIVITY,
    OBJECTIVES,
    ClusterModel,
    objective_value,
    project_weights,
    rates_from_sinr,
)


@dataclass(frozen=True)
class EnvConfig:
    scenario: ScenarioConfig
    num_clusters: int
    topology_seed: int = 0
    objective: str = "sum_rate"
    sic: bool = True
    gain_method: str = "wiener_hopf"
    sic_sensitivity: float = DEFAULT_SIC_SENSITIVITY
    penalty: float = 1.0
    frozen_fading: bool = False
    action_cap: int = DEFAULT_ACTION_CAP

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.penalty < 0:
            raise ValueError("penalty must be non-negative")


@dataclass(frozen=True)
class EnvState:
    sinr: np.ndarray
    t: int
    realization: object = field(repr=False, compare=False)


@dataclass(frozen=True)
class HybridAction:
    weights: np.ndarray  # flattened (K * M~,) in [0, 1]
    cluster: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
            raise ValueError("beamforming weights must lie in [0, 1]")


@dataclass(frozen=True)
class StepInfo:
    sinr: np.ndarray
    rates: np.ndarray
    objective: float
    violation: float
    weights: np.ndarray  # applied, after the C3 projection


def normalize_state(sinr):
    """log(1 + SINR) / 10, the network-facing state."""
    return np.log1p(np.asarray(sinr, dtype=float)) / 10.0


class CellFreeEnv:
    def __init__(self, cfg):
        self.cfg = cfg
        self.net = Network(cfg.scenario, cfg.topology_seed)
        self.num_users = self.net.num_users
        self.num_aps = self.net.num_aps
        self.num_clusters = cfg.num_clusters
        self.clusters = enumerate_configs(self.num_aps, cfg.num_clusters, cap=cfg.action_cap)
        self.rng = None

    @property
    def static(self):
        return self.num_clusters == self.num_aps

    @property
    def num_configs(self):
        return len(self.clusters)

    @property
    def action_dim(self):
        return self.num_users * self.num_clusters

    def reset(self, rng):
        """Start an episode on a fresh realization drawn from rng, which the
        environment keeps for later steps."""
        self.rng = rng
        return EnvState(np.zeros(self.num_users), 0, self.net.draw(rng))

    def model(self, realization, cluster_index):
        c = self.cfg
        return ClusterModel(realization, self.clusters[cluster_index], c.gain_method, c.sic, c.sic_sensitivity)

    def evaluate(self, realization, action):
        """Apply an action to one realization; returns (reward, StepInfo)."""
        if not 0 <= int(action.cluster) < self.num_configs:
            raise ValueError(f"cluster index {action.cluster} out of range")
        w = project_weights(np.asarray(action.weights, dtype=float).reshape(self.num_users, self.num_clusters))
        model = self.model(realization, int(action.cluster))
        sinr = model.sinr(w)
        rates = rates_from_sinr(sinr)
        obj = float(objective_value(rates, self.cfg.objective))
        viol = float(np.sum(np.maximum(0.0, -model.normalized_slacks(w)))) if model.c1.size else 0.0
        return obj - self.cfg.penalty * viol, StepInfo(sinr, rates, obj, viol, w)

    def step(self, state, action):
        reward, info = self.evaluate(state.realization, action)
        if self.cfg.frozen_fading:
            nxt = state.realization
        else:
            nxt = self.net.draw(self.rng)
        return EnvState(info.sinr, state.t + 1, nxt), reward, info


def env_step(env, state, action):
    next_state, reward, _ = env.step(state, action)
    return next_state, reward
