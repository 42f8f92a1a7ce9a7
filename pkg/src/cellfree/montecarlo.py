"""Seeded Monte-Carlo estimation of outage, mean rate and SINR histograms.

Runs are split into batches; batch b draws from the stream (seed, b), so
estimates do not depend on how batches are spread over workers. Partial
sums are combined with math.fsum in batch order.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .channel import Network
from .clustering import ClusterConfig
from .sinr import batch_sinr

DESK_RUNS = 100_000
PAPER_RUNS = 2_000_000
SCENARIOS = ("static", "dynamic", "dynamic_sic")


@dataclass(frozen=True)
class MCConfig:
    runs: int = DESK_RUNS
    seed: int = 0
    batch_size: int = 10_000
    workers: int = 1
    scenario: str = "static"
    estimand: str = "outage"

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")

    def batches(self):
        n = math.ceil(self.runs / self.batch_size)
        return [(b, min(self.batch_size, self.runs - b * self.batch_size)) for b in range(n)]


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    runs: int
    estimand: str = "outage"
    params: dict = field(default_factory=dict)

    @property
    def half_width(self):
        return 3.0 * self.stderr


@dataclass(frozen=True)
class Policy:
    """Receiver setup held fixed over the runs.

    weights: K x M~ matrix (None = all ones); cluster: None = singletons;
    gain_method: unit | mrc | wiener_hopf; sic: detect with SIC ordering.
    """

    weights: np.ndarray = None
    cluster: ClusterConfig = None
    gain_method: str = "unit"
    sic: bool = False

    def resolve(self, num_aps, num_users):
        cluster = self.cluster or ClusterConfig.singletons(num_aps)
        w = np.ones((num_users, cluster.num_clusters)) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (num_users, cluster.num_clusters):
            raise ValueError(f"weights must be {num_users} x {cluster.num_clusters}")
        return cluster, w


def _normalized_power(gpow, cluster):
    out = np.empty_like(gpow)
    for block in cluster.blocks():
        idx = list(block)
        tot = gpow[:, idx, :].sum(axis=1, keepdims=True)
        out[:, idx, :] = gpow[:, idx, :] / np.where(tot > 0, tot, 1.0)
    return out


def batch_gain_power(g_hat, cluster, method, powers, noise_var, normalize=True):
    """|G_mk|^2 for a batch of estimates (B, M, K), unit-norm per cluster by default."""
    if method == "unit":
        return np.ones(g_hat.shape[1:])[None]
    if method == "mrc":
        raw = 4.0 * np.abs(g_hat) ** 2 / (noise_var[None, :, None] ** 2)
        return _normalized_power(raw, cluster) if normalize else raw
    if method != "wiener_hopf":
        raise ValueError(f"unknown combining method {method!r}")
    bsz, _, num_users = g_hat.shape
    out = np.empty(g_hat.shape)
    for block in cluster.blocks():
        idx = list(block)
        gb = g_hat[:, idx, :]  # (B, N, K)
        full = np.einsum("bnl,l,bql->bnq", gb, powers, gb.conj())
        diag = np.diag(noise_var[idx] / 2.0)
        for k in range(num_users):
            own = powers[k] * np.einsum("bn,bq->bnq", gb[:, :, k], gb[:, :, k].conj())
            r = full - own + diag
            sol = np.linalg.solve(r, gb[:, :, k][..., None])[..., 0]
            out[:, idx, k] = np.abs(sol) ** 2
    return _normalized_power(out, cluster) if normalize else out


def sic_masks(metric):
    """Interferer masks [b, k, l]: l remains for k when l ranks below k."""
    order = np.argsort(metric, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(metric.shape[1])[None, :], axis=1)
    return rank[:, None, :] < rank[:, :, None]


class NetworkSampler:
    """Draws per-user SINR batches for a scenario with a fixed topology."""

    def __init__(self, scenario, topology_seed, policy):
        self.scenario = scenario
        self.topology_seed = topology_seed
        self.policy = policy
        self._net = None

    def __getstate__(self):
        return {"scenario": self.scenario, "topology_seed": self.topology_seed, "policy": self.policy, "_net": None}

    @property
    def net(self):
        if self._net is None:
            self._net = Network(self.scenario, self.topology_seed)
        return self._net

    def sample(self, rng, size):
        net = self.net
        cluster, w = self.policy.resolve(net.num_aps, net.num_users)
        _, g, g_hat = net.draw_channels(rng, batch=size)
        template = net.realization(None, None, None)
        idx = np.asarray(cluster.assignment)
        gpow = batch_gain_power(g_hat, cluster, self.policy.gain_method, net.user_powers, net.noise_var)
        omega = (w.T[idx] ** 2)[None] * gpow
        omega = np.broadcast_to(omega, g.shape)
        if self.policy.sic:
            metric = net.user_powers[None, :] * np.sum(gpow * np.abs(g_hat) ** 2, axis=1)
            masks = sic_masks(metric)
        else:
            masks = ~np.eye(net.num_users, dtype=bool)
        return batch_sinr(np.abs(g) ** 2, omega, masks, template)


class ExponentialPlant:
    """Synthetic SINR with i.i.d. exponential users; outage 1 - exp(-t/mean)."""

    def __init__(self, mean=1.0, num_users=1):
        self.mean = mean
        self.num_users = num_users

    def sample(self, rng, size):
        return rng.exponential(self.mean, size=(size, self.num_users))


def _outage_batch(args):
    sampler, seed, index, size, thresholds, user = args
    s = sampler.sample(rngmod.make_rng(seed, rngmod.FADING, index), size)[:, user]
    return [int(np.count_nonzero(s < t)) for t in thresholds]


def _rate_batch(args):
    sampler, seed, index, size = args
    s = sampler.sample(rngmod.make_rng(seed, rngmod.FADING, index), size)
    per_run = np.log2(1.0 + s).mean(axis=1)
    return math.fsum(per_run), math.fsum(per_run * per_run)


def _hist_batch(args):
    sampler, seed, index, size, edges, user = args
    s = sampler.sample(rngmod.make_rng(seed, rngmod.FADING, index), size)[:, user]
    counts, _ = np.histogram(s, bins=edges)
    return counts.astype(np.int64)


def _samples_batch(args):
    sampler, seed, index, size, user = args
    return sampler.sample(rngmod.make_rng(seed, rngmod.FADING, index), size)[:, user]


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def estimate_outage(sampler, thresholds, mc, user=0):
    """Outage estimates P(SINR_user < t) for each threshold, from one set of draws."""
    scalar = np.isscalar(thresholds)
    ts = [float(thresholds)] if scalar else [float(t) for t in thresholds]
    jobs = [(sampler, mc.seed, b, n, ts, user) for b, n in mc.batches()]
    counts = np.array(_map(_outage_batch, jobs, mc.workers), dtype=np.int64).sum(axis=0)
    out = []
    for t, c in zip(ts, counts):
        p = c / mc.runs
        out.append(MCEstimate(float(p), math.sqrt(p * (1.0 - p) / mc.runs), mc.runs, "outage",
                              {"threshold": t, "user": user}))
    return out[0] if scalar else out


def estimate_rate(sampler, mc):
    """Mean per-user rate sum_k log2(1 + SINR_k) / K."""
    jobs = [(sampler, mc.seed, b, n) for b, n in mc.batches()]
    parts = _map(_rate_batch, jobs, mc.workers)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    n = mc.runs
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return MCEstimate(mean, math.sqrt(var / n), n, "rate", {})


def sinr_histogram(sampler, edges, mc, user=0):
    jobs = [(sampler, mc.seed, b, n, np.asarray(edges, float), user) for b, n in mc.batches()]
    return np.sum(_map(_hist_batch, jobs, mc.workers), axis=0)


def sample_sinr(sampler, mc, user=0):
    """Raw SINR draws of one user, in batch order."""
    jobs = [(sampler, mc.seed, b, n, user) for b, n in mc.batches()]
    return np.concatenate(_map(_samples_batch, jobs, mc.workers))
