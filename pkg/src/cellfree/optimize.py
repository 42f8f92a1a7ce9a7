"""Joint AP clustering and beamforming (problem P1) with non-learning solvers.

For a fixed cluster configuration every user's SINR depends only on its
own weight row: gamma_k = sum_j w_kj^2 n_kj / sum_j w_kj^2 d_kj, where n and
d aggregate signal and interference-plus-noise over the antennas of
cluster j. The SIC constraints C1 then couple the rows linearly in w^2.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .combining import combiner_gains
from .sinr import noise_unit, sic_order_users, _power_amplitudes
from .units import dbm_to_watt

OBJECTIVES = ("sum_rate", "max_min_rate")
DEFAULT_SIC_SENSITIVITY = float(dbm_to_watt(1.0))
FEASIBILITY_TOL = 1e-9
EXHAUSTIVE_BUDGET = 10_000_000


class BudgetExceeded(RuntimeError):
    def __init__(self, required, budget):
        super().__init__(f"exhaustive search needs {required} evaluations, budget is {budget}")
        self.required = required
        self.budget = budget


@dataclass(frozen=True)
class ProblemP1:
    realization: object
    candidate_clusters: tuple
    objective: str = "sum_rate"
    sic_sensitivity: float = DEFAULT_SIC_SENSITIVITY
    das_gain_method: str = "wiener_hopf"
    sic: bool = True

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if not self.sic_sensitivity > 0:
            raise ValueError("SIC sensitivity must be positive")
        if not self.candidate_clusters:
            raise ValueError("need at least one candidate cluster")
        object.__setattr__(self, "candidate_clusters", tuple(self.candidate_clusters))


@dataclass(frozen=True)
class BeamformingSolution:
    cluster: object
    weights: np.ndarray
    per_user_rates: np.ndarray
    objective_value: float
    c1_slacks: np.ndarray
    feasible: bool
    sinr: np.ndarray = None
    sic_order: tuple = ()
    info: dict = field(default_factory=dict)

    def to_record(self):
        """Flat key=value text record."""
        def fmt(a):
            return " ".join(repr(float(v)) for v in np.ravel(a))

        lines = [
            f"cluster={self.cluster.to_string()}",
            f"weights_shape={self.weights.shape[0]}x{self.weights.shape[1]}",
            f"weights={fmt(self.weights)}",
            f"rates={fmt(self.per_user_rates)}",
            f"slacks={fmt(self.c1_slacks)}",
            f"objective={self.objective_value!r}",
            f"feasible={str(self.feasible).lower()}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text):
        from .clustering import ClusterConfig

        kv = dict(line.split("=", 1) for line in text.strip().splitlines())
        rows, cols = (int(v) for v in kv["weights_shape"].split("x"))

        def arr(s):
            return np.array([float(v) for v in s.split()]) if s.strip() else np.zeros(0)

        return cls(
            cluster=ClusterConfig.from_string(kv["cluster"]),
            weights=arr(kv["weights"]).reshape(rows, cols),
            per_user_rates=arr(kv["rates"]),
            objective_value=float(kv["objective"]),
            c1_slacks=arr(kv["slacks"]),
            feasible=kv["feasible"] == "true",
        )


class ClusterModel:
    """Per-(realization, cluster) aggregates for fast objective evaluation."""

    def __init__(self, real, cluster, gain_method="wiener_hopf", sic=True, sic_sensitivity=DEFAULT_SIC_SENSITIVITY,
                 gains=None):
        self.real = real
        self.cluster = cluster
        self.sic = sic
        self.sic_sensitivity = sic_sensitivity
        if gains is None:
            gains = combiner_gains(real, cluster, gain_method)
        self.gains = gains
        gmat = gains.gains
        num_users = real.num_users
        if sic:
            self.order = sic_order_users(real, cluster, gains)
        else:
            self.order = tuple(range(num_users))
        rank = np.empty(num_users, dtype=int)
        rank[list(self.order)] = np.arange(num_users)
        if sic:
            inter = (rank[None, :] < rank[:, None]).astype(float)
        else:
            inter = 1.0 - np.eye(num_users)

        g2 = np.abs(real.true_channels) ** 2
        pa = _power_amplitudes(real)
        rx = pa * g2
        field_ = rx @ inter.T  # [m, k]: IUI reaching user k's detector at antenna m
        ov2 = real.pilot_overlap ** 2
        q = np.einsum("mkl,ml->mk", ov2, g2)
        own = pa * q
        cross = own.sum(axis=1, keepdims=True) - own
        nu = noise_unit(real)[:, None]
        gp = np.abs(gmat) ** 2
        num_clusters = cluster.num_clusters
        onehot = np.zeros((num_clusters, real.num_aps))
        onehot[np.asarray(cluster.assignment), np.arange(real.num_aps)] = 1.0
        self.n = (onehot @ (gp * rx)).T  # (K, M~)
        self.d = (onehot @ (gp * (field_ + own + cross + nu))).T
        gbar = 2.0 * real.user_powers[None, :] * np.abs(gmat) * np.abs(real.estimated_channels) ** 2 / real.noise_var[:, None]
        self.gbar = (onehot @ gbar).T  # (K, M~) indexed by user
        self._build_constraints()

    def _build_constraints(self):
        """C1 as linear forms in w^2: slack = sum_{u,j} A[c,u,j] w_uj^2 - P_s."""
        num_users = self.real.num_users
        order = self.order
        rows, scale = [], []
        if self.sic:
            for l in range(1, num_users):
                ul = order[l]
                for delta in range(l):
                    a = np.zeros((num_users, self.cluster.num_clusters))
                    a[order[delta]] += self.gbar[ul]
                    for i in range(delta + 1, l + 1):
                        a[order[i]] -= self.gbar[ul]
                    rows.append(a)
                    scale.append(self.gbar[ul].sum())
        self.c1 = np.array(rows).reshape(len(rows), num_users, self.cluster.num_clusters)
        self.c1_scale = np.array(scale, dtype=float)

    def sinr(self, w):
        """SINR for weights w of shape (..., K, M~)."""
        w2 = np.asarray(w, dtype=float) ** 2
        num = np.sum(w2 * self.n, axis=-1)
        den = np.sum(w2 * self.d, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / den
        return np.where(num == 0.0, 0.0, out)

    def slacks(self, w):
        w2 = np.asarray(w, dtype=float) ** 2
        return np.einsum("cuj,...uj->...c", self.c1, w2) - self.sic_sensitivity

    def normalized_slacks(self, w):
        return self.slacks(w) / self.c1_scale if self.c1_scale.size else self.slacks(w)


def rates_from_sinr(sinr):
    return np.log2(1.0 + sinr)


def objective_value(rates, objective):
    rates = np.asarray(rates)
    if objective == "sum_rate":
        return rates.sum(axis=-1)
    return rates.min(axis=-1)


def project_weights(w):
    """C2 box then C3 per-user ball; the ball scaling keeps the box."""
    w = np.clip(np.asarray(w, dtype=float), 0.0, 1.0)
    norms = np.sqrt(np.sum(w * w, axis=-1, keepdims=True))
    return np.where(norms > 1.0, w / np.where(norms > 0, norms, 1.0), w)


def _solution(model, w, objective, **info):
    sinr = model.sinr(w)
    rates = rates_from_sinr(sinr)
    slacks = model.slacks(w)
    feasible = bool(np.all(slacks >= 0.0))
    return BeamformingSolution(model.cluster, np.array(w, dtype=float), rates, float(objective_value(rates, objective)),
                               slacks, feasible, sinr, model.order, info)


def model_for(problem, cluster):
    return ClusterModel(problem.realization, cluster, problem.das_gain_method, problem.sic, problem.sic_sensitivity)


def evaluate_solution(problem, cluster, w):
    w = np.asarray(w, dtype=float)
    expected = (problem.realization.num_users, cluster.num_clusters)
    if w.shape != expected:
        raise ValueError(f"weights must be {expected[0]} x {expected[1]}")
    if np.any(w < 0) or np.any(w > 1) or np.any(np.sum(w * w, axis=1) > 1.0 + 1e-12):
        raise ValueError("weights violate C2 or C3")
    return _solution(model_for(problem, cluster), w, problem.objective)


def _best_index(objs, feasible):
    """Best feasible entry, else best overall; first index wins ties."""
    pool = np.where(feasible, objs, -np.inf)
    if np.any(feasible):
        return int(np.argmax(pool))
    return int(np.argmax(objs))


def solve_exhaustive(problem, grid_points_per_weight=11, budget=EXHAUSTIVE_BUDGET, chunk=200_000, clusters=None):
    """Grid search over [0,1]^(K M~) (projected onto C3) for every candidate cluster."""
    clusters = problem.candidate_clusters if clusters is None else clusters
    num_users = problem.realization.num_users
    total = sum(grid_points_per_weight ** (num_users * c.num_clusters) for c in clusters)
    if total > budget:
        raise BudgetExceeded(total, budget)
    levels = np.linspace(0.0, 1.0, grid_points_per_weight)
    best, best_key = None, None
    for ci, cluster in enumerate(clusters):
        model = model_for(problem, cluster)
        shape = (num_users, cluster.num_clusters)
        dims = num_users * cluster.num_clusters
        n_all = grid_points_per_weight ** dims
        top_obj, top_w, top_feas = -np.inf, None, False
        for start in range(0, n_all, chunk):
            idx = np.arange(start, min(start + chunk, n_all))
            digits = (idx[:, None] // grid_points_per_weight ** np.arange(dims - 1, -1, -1)[None, :]) % grid_points_per_weight
            w = project_weights(levels[digits].reshape((-1,) + shape))
            objs = objective_value(rates_from_sinr(model.sinr(w)), problem.objective)
            feas = np.all(model.slacks(w) >= 0.0, axis=-1) if model.c1.size else np.ones(len(w), bool)
            i = _best_index(objs, feas)
            cand_key = (bool(feas[i]), float(objs[i]))
            if top_w is None or cand_key > (top_feas, top_obj):
                top_obj, top_w, top_feas = float(objs[i]), w[i], bool(feas[i])
        sol = _solution(model, top_w, problem.objective, solver="exhaustive", evaluations=n_all)
        key = (sol.feasible, sol.objective_value)
        if best is None or key[0] > best_key[0] or (key[0] == best_key[0] and key[1] > best_key[1] + 1e-12):
            best, best_key = sol, key
    return best


@dataclass(frozen=True)
class GradientConfig:
    """Projected gradient settings. Ascent runs on the power weights v = w^2,
    over {v >= 0, sum_j v_kj <= 1}, which is C2 and C3 rewritten."""

    step: float = 0.05
    max_iter: int = 5000
    tol: float = 1e-6
    restarts: int = 5
    penalty_start: float = 1.0
    penalty_growth: float = 10.0
    penalty_period: int = 500
    smoothing: float = 50.0
    margin: float = 1e-6
    armijo: float = 1e-4
    seed: int = 0


def project_capped_simplex(v):
    """Euclidean projection of each row onto {v >= 0, sum(v) <= 1}."""
    v = np.asarray(v, dtype=float)
    out = np.maximum(v, 0.0)
    over = out.sum(axis=-1) > 1.0
    if np.any(over):
        rows = v[over]
        srt = -np.sort(-rows, axis=-1)
        css = np.cumsum(srt, axis=-1) - 1.0
        idx = np.arange(1, rows.shape[-1] + 1)
        cond = srt - css / idx > 0
        rho = cond.shape[-1] - 1 - np.argmax(cond[:, ::-1], axis=-1)
        theta = css[np.arange(len(rows)), rho] / (rho + 1.0)
        out[over] = np.maximum(rows - theta[:, None], 0.0)
    return out


def _smooth_objective(model, v, objective, t):
    """Smoothed objective and its gradient with respect to v = w^2 (K x M~)."""
    num = np.sum(v * model.n, axis=-1)
    den = np.sum(v * model.d, axis=-1)
    safe = np.where(den > 0, den, 1.0)
    sinr = np.where(num > 0, num / safe, 0.0)
    rates = np.log2(1.0 + sinr)
    dsinr = (model.n * den[:, None] - model.d * num[:, None]) / (safe[:, None] ** 2)
    drate = dsinr / ((1.0 + sinr)[:, None] * math.log(2.0))
    if objective == "sum_rate":
        return float(rates.sum()), drate
    z = -t * rates
    zmax = z.max()
    e = np.exp(z - zmax)
    val = -(zmax + math.log(e.sum())) / t
    return float(val), drate * (e / e.sum())[:, None]


def _penalty(model, v, margin):
    """Exact penalty sum max(0, margin - normalized slack) and its v-gradient."""
    if not model.c1.size:
        return 0.0, np.zeros_like(v)
    s = model.normalized_slacks(np.sqrt(v))
    viol = margin - s
    active = viol > 0
    val = float(np.sum(viol[active]))
    grad = -(model.c1[active] / model.c1_scale[active][:, None, None]).sum(axis=0)
    return val, grad


def _ascend(model, v, objective, cfg):
    def merit(x, mu):
        f, gf = _smooth_objective(model, x, objective, cfg.smoothing)
        p, gp = _penalty(model, x, cfg.margin)
        return f - mu * p, gf - mu * gp

    step = cfg.step
    best = _solution(model, np.sqrt(v), objective)
    it = 0
    still = 0
    for it in range(cfg.max_iter):
        mu = cfg.penalty_start * cfg.penalty_growth ** (it // cfg.penalty_period)
        val, grad = merit(v, mu)
        if np.linalg.norm(project_capped_simplex(v + grad) - v) < cfg.tol:
            break
        while True:
            cand = project_capped_simplex(v + step * grad)
            new_val, _ = merit(cand, mu)
            if new_val >= val + cfg.armijo * float(np.sum(grad * (cand - v))) or step < 1e-14:
                break
            step *= 0.5
        # at a penalty kink the projected gradient never vanishes; stop once
        # the iterate has stopped moving
        still = still + 1 if np.linalg.norm(cand - v) < cfg.tol * 1e-4 else 0
        v = cand
        if still >= 20:
            break
        step = min(step * 1.5, 1e6)
        if it % 25 == 0:
            best = _keep_better(best, _solution(model, np.sqrt(v), objective))
    best = _keep_better(best, _solution(model, np.sqrt(v), objective))
    return best, it + 1


def solve_projected_gradient(problem, cluster, config=None, model=None):
    """Projected gradient ascent with an exact penalty for C1 and restarts.

    The first start is w = 1/sqrt(M~) for everyone; the rest are random.
    The best feasible iterate (exact objective) over all starts is returned.
    """
    cfg = config or GradientConfig()
    model = model or model_for(problem, cluster)
    num_users, num_clusters = problem.realization.num_users, cluster.num_clusters
    rng = rngmod.make_rng(cfg.seed, rngmod.SOLVER)
    starts = [np.full((num_users, num_clusters), 1.0 / num_clusters)]
    for _ in range(cfg.restarts - 1):
        starts.append(project_capped_simplex(rng.random((num_users, num_clusters))))
    sols, iters = [], []
    for v in starts:
        sol, n = _ascend(model, v, problem.objective, cfg)
        sols.append(sol)
        iters.append(n)
    i = _best_index(np.array([s.objective_value for s in sols]), np.array([s.feasible for s in sols]))
    sol = sols[i]
    return BeamformingSolution(sol.cluster, sol.weights, sol.per_user_rates, sol.objective_value, sol.c1_slacks,
                               sol.feasible, sol.sinr, sol.sic_order,
                               {"solver": "projected_gradient", "iterations": iters})


def _keep_better(a, b):
    if a is None:
        return b
    if b.feasible != a.feasible:
        return b if b.feasible else a
    return b if b.objective_value > a.objective_value else a


def solve_joint(problem, weight_solver="gradient", gradient_config=None, grid_points_per_weight=11):
    """Best (cluster, weights) over all candidate clusters.

    Ties within 1e-12 go to the earliest candidate (lowest canonical index
    when candidates come from enumerate_configs).
    """
    best = None
    per_cluster = []
    for cluster in problem.candidate_clusters:
        if weight_solver == "gradient":
            sol = solve_projected_gradient(problem, cluster, gradient_config)
        elif weight_solver == "exhaustive":
            sol = solve_exhaustive(problem, grid_points_per_weight, clusters=(cluster,))
        else:
            raise ValueError(f"unknown weight solver {weight_solver!r}")
        per_cluster.append(sol.objective_value)
        if best is None:
            best = sol
            continue
        if sol.feasible and not best.feasible:
            best = sol
        elif sol.feasible == best.feasible and sol.objective_value > best.objective_value + 1e-12:
            best = sol
    info = dict(best.info)
    info["per_cluster_objective"] = per_cluster
    return BeamformingSolution(best.cluster, best.weights, best.per_user_rates, best.objective_value, best.c1_slacks,
                               best.feasible, best.sinr, best.sic_order, info)
