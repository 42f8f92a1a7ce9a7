"""Held-out comparison of a policy against the joint baseline solver."""

from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from ..optimize import ProblemP1, solve_joint
from .env import HybridAction


@dataclass(frozen=True)
class ComparisonRow:
    instance: int
    policy_rate: float
    baseline_rate: float

    @property
    def ratio(self):
        return self.policy_rate / self.baseline_rate if self.baseline_rate > 0 else float("nan")


class RandomPolicy:
    """Uniform weights in [0,1] and a uniform cluster index."""

    def __init__(self, env, seed):
        self.env = env
        self.rng = rngmod.make_rng(seed, rngmod.EVALUATION, 99)

    def __call__(self, state):
        w = self.rng.random(self.env.action_dim)
        return HybridAction(w, int(self.rng.integers(self.env.num_configs)))


class OraclePolicy:
    """Plays the baseline solver's own solution on the current realization."""

    def __init__(self, env, solver_kwargs=None):
        self.env = env
        self.solver_kwargs = solver_kwargs or {}
        self.last = None

    def __call__(self, state):
        sol = baseline_solution(self.env, state.realization, **self.solver_kwargs)
        self.last = sol
        return HybridAction(sol.weights.reshape(-1), self.env.clusters.index(sol.cluster))


def baseline_solution(env, realization, weight_solver="exhaustive", grid_points_per_weight=11):
    c = env.cfg
    problem = ProblemP1(realization, tuple(env.clusters), c.objective, c.sic_sensitivity, c.gain_method, c.sic)
    return solve_joint(problem, weight_solver=weight_solver, grid_points_per_weight=grid_points_per_weight)


def compare_policy(env, policy, instances, seed, weight_solver="exhaustive", grid_points_per_weight=11):
    """Roll the policy over held-out realizations (state = previous SINR) and
    score mean per-user rate against the baseline on each realization."""
    state = env.reset(rngmod.make_rng(seed, rngmod.EVALUATION, 0))
    rows = []
    for i in range(instances):
        real = state.realization
        action = policy(state)
        nxt, _, info = env.step(state, action)
        if isinstance(policy, OraclePolicy):
            base = policy.last
        else:
            base = baseline_solution(env, real, weight_solver, grid_points_per_weight)
        rows.append(ComparisonRow(i, float(np.mean(info.rates)), float(np.mean(base.per_user_rates))))
        state = nxt
    return rows


def mean_ratio(rows):
    """Ratio of mean achieved rates over the held-out set."""
    p = np.mean([r.policy_rate for r in rows])
    b = np.mean([r.baseline_rate for r in rows])
    return float(p / b)
