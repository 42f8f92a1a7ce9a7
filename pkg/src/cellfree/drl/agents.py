"""Hybrid agent: DDPG for beamforming weights, double DQN for the cluster choice."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import rng as rngmod
from .env import HybridAction, normalize_state
from .nn import Adam, DenseNet
from .replay import ReplayBuffer


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    discount: float = 0.99
    learning_rate: float = 5e-5
    critic_learning_rate: float = None  # None = learning_rate
    q_learning_rate: float = None
    polyak: float = 1e-3
    buffer_size: int = 20_000
    minibatch: int = 64
    episodes: int = 2500
    steps: int = 500
    target_period: int = 1
    adam_betas: tuple = (0.9, 0.999)
    sigma_start: float = 0.2
    sigma_end: float = 0.02
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    explore_fraction: float = 0.5
    actor_hidden: tuple = (256, 128)
    critic_hidden: tuple = (256, 128)
    q_hidden: tuple = (64, 64)
    reward_scale: float = 1.0
    hard_copy: bool = False

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if not 0.0 < self.polyak <= 1.0:
            raise ValueError("polyak rate must lie in (0, 1]")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        for name in ("buffer_size", "minibatch", "episodes", "steps", "target_period"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.minibatch > self.buffer_size:
            raise ValueError("minibatch larger than the buffer")

    @property
    def critic_lr(self):
        return self.learning_rate if self.critic_learning_rate is None else self.critic_learning_rate

    @property
    def q_lr(self):
        return self.learning_rate if self.q_learning_rate is None else self.q_learning_rate

    @classmethod
    def full_scale(cls, **overrides):
        return replace(cls(), **overrides)

    @classmethod
    def desk(cls, **overrides):
        base = cls(discount=0.5, learning_rate=1e-3, polyak=1e-2, buffer_size=5000, episodes=320, steps=40,
                   actor_hidden=(64, 32), critic_hidden=(64, 32), q_hidden=(64, 64), reward_scale=0.1)
        return replace(base, **overrides)

    def schedule(self, step):
        """(sigma, epsilon) at a global step: linear decay over the first
        explore_fraction of training, then constant."""
        horizon = max(1.0, self.explore_fraction * self.episodes * self.steps)
        f = min(1.0, step / horizon)
        return (self.sigma_start + f * (self.sigma_end - self.sigma_start),
                self.epsilon_start + f * (self.epsilon_end - self.epsilon_start))


def _mlp(n_in, hidden, n_out, out_act, rng):
    sizes = [n_in, *hidden, n_out]
    acts = ["relu"] * len(hidden) + [out_act]
    return DenseNet(sizes, acts, rng=rng, final_scale=3e-3)


@dataclass
class AgentBundle:
    """Online and target networks, their optimizers and the replay buffer."""

    num_users: int
    num_clusters: int
    num_configs: int
    actor: DenseNet
    critic: DenseNet
    actor_target: DenseNet
    critic_target: DenseNet
    qnet: DenseNet = None
    qnet_target: DenseNet = None
    actor_opt: Adam = None
    critic_opt: Adam = None
    q_opt: Adam = None
    buffer: ReplayBuffer = None
    meta: dict = field(default_factory=dict)

    @property
    def static(self):
        return self.qnet is None

    @property
    def action_dim(self):
        return self.num_users * self.num_clusters

    @classmethod
    def create(cls, num_users, num_clusters, num_configs, hyper, rng, static=False):
        a_dim = num_users * num_clusters
        actor = _mlp(num_users, hyper.actor_hidden, a_dim, "sigmoid", rng)
        c_in = num_users + a_dim + (0 if static else num_configs)
        critic = _mlp(c_in, hyper.critic_hidden, 1, "linear", rng)
        qnet = None if static else _mlp(num_users, hyper.q_hidden, num_configs, "linear", rng)
        b = hyper.adam_betas
        bundle = cls(num_users, num_clusters, num_configs, actor, critic, actor.copy(), critic.copy(),
                     qnet, None if static else qnet.copy(),
                     Adam(actor.params(), hyper.learning_rate, b), Adam(critic.params(), hyper.critic_lr, b),
                     None if static else Adam(qnet.params(), hyper.q_lr, b),
                     ReplayBuffer(hyper.buffer_size, num_users, a_dim))
        return bundle

    def critic_input(self, state, weights, cluster):
        parts = [np.atleast_2d(state), np.atleast_2d(weights)]
        if not self.static:
            parts.append(np.eye(self.num_configs)[np.atleast_1d(cluster)])
        return np.concatenate(parts, axis=1)

    def greedy_cluster(self, state, target=False):
        if self.static:
            return np.zeros(len(np.atleast_2d(state)), dtype=np.int64)
        net = self.qnet_target if target else self.qnet
        return np.argmax(net.forward(state), axis=1)

    def act(self, sinr, rng=None, sigma=0.0, epsilon=0.0):
        """Exploratory action when rng is given, otherwise greedy."""
        s = normalize_state(sinr)[None]
        weights = self.actor.forward(s)[0]
        cluster = int(self.greedy_cluster(s)[0])
        if rng is not None:
            weights = weights + sigma * rng.standard_normal(weights.shape)
            explore = rng.random()
            pick = int(rng.integers(self.num_configs))
            if not self.static and explore < epsilon:
                cluster = pick
        return HybridAction(np.clip(weights, 0.0, 1.0), cluster)

    def __call__(self, state):
        return self.act(state.sinr)


def _check_finite(value, what):
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite {what}: {value}")


def ddpg_update(bundle, batch, hyper):
    """One critic step on the squared TD error, then one actor step along the
    deterministic policy gradient dQ/da * dmu/dtheta."""
    n = len(batch)
    s, s2 = batch.state, batch.next_state
    a2 = bundle.actor_target.forward(s2)
    c2 = bundle.greedy_cluster(s2, target=True)
    q2 = bundle.critic_target.forward(bundle.critic_input(s2, a2, c2))[:, 0]
    y = hyper.reward_scale * batch.reward + hyper.discount * q2

    q = bundle.critic.forward(bundle.critic_input(s, batch.weights, batch.cluster))[:, 0]
    err = q - y
    loss = float(np.mean(err * err))
    _check_finite(loss, "critic loss")
    grads, _ = bundle.critic.backward((2.0 * err / n)[:, None])
    bundle.critic_opt.step(bundle.critic.params(), grads)

    a = bundle.actor.forward(s)
    qa = bundle.critic.forward(bundle.critic_input(s, a, batch.cluster))[:, 0]
    _, gin = bundle.critic.backward(np.full((n, 1), -1.0 / n))
    d = bundle.num_users
    grad_a = gin[:, d:d + bundle.action_dim]
    bundle.actor.forward(s)
    agrads, _ = bundle.actor.backward(grad_a)
    bundle.actor_opt.step(bundle.actor.params(), agrads)
    actor_q = float(np.mean(qa))
    _check_finite(actor_q, "actor objective")
    return {"critic_loss": loss, "actor_q": actor_q}


def ddqn_update(qnet, target_qnet, batch, hyper, optimizer):
    """Double Q step: the target network picks a* at s', the online network
    values it, and Q(s, a) regresses on r + zeta Q(s', a*)."""
    n = len(batch)
    sel = np.argmax(target_qnet.forward(batch.next_state), axis=1)
    q_next = qnet.forward(batch.next_state)[np.arange(n), sel]
    y = hyper.reward_scale * batch.reward + hyper.discount * q_next
    q_all = qnet.forward(batch.state)
    err = q_all[np.arange(n), batch.cluster] - y
    loss = float(np.mean(err * err))
    _check_finite(loss, "Q loss")
    up = np.zeros_like(q_all)
    up[np.arange(n), batch.cluster] = 2.0 * err / n
    grads, _ = qnet.backward(up)
    optimizer.step(qnet.params(), grads)
    return {"q_loss": loss}


def polyak_update(target, online, tau):
    """theta' <- (1 - tau) theta' + tau theta, in place."""
    tp, op = target.params(), online.params()
    if len(tp) != len(op):
        raise ValueError("networks have different layer counts")
    for t, o in zip(tp, op):
        if t.shape != o.shape:
            raise ValueError(f"shape mismatch {t.shape} vs {o.shape}")
    if tau == 0.0:
        return target
    for t, o in zip(tp, op):
        if tau == 1.0:
            t[...] = o
        else:
            t *= 1.0 - tau
            t += tau * o
    return target


def update_targets(bundle, hyper):
    tau = 1.0 if hyper.hard_copy else hyper.polyak
    polyak_update(bundle.actor_target, bundle.actor, tau)
    polyak_update(bundle.critic_target, bundle.critic, tau)
    if not bundle.static:
        polyak_update(bundle.qnet_target, bundle.qnet, tau)


@dataclass
class TrainingLog:
    columns: list
    rows: list = field(default_factory=list)

    def column(self, name):
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def to_csv_lines(self):
        def fmt(v):
            return repr(float(v)) if isinstance(v, float) else str(v)
        lines = [",".join(self.columns)]
        lines += [",".join(fmt(v) for v in r) for r in self.rows]
        return lines


@dataclass
class TrainingResult:
    log: TrainingLog
    bundle: AgentBundle


def smoothed(values, window=50):
    """Trailing mean over up to `window` entries ending at each index."""
    values = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def train_hybrid(env, hyper, seed, progress=None):
    """Run the hybrid training loop; returns the per-episode log and the agents.

    Each step: exploratory action, environment step, store, then (once the
    buffer holds a minibatch) a DDPG step, a DDQN step in dynamic mode and
    target updates every target_period steps.
    """
    init_rng = rngmod.make_rng(seed, rngmod.TRAINING, 0)
    explore_rng = rngmod.make_rng(seed, rngmod.TRAINING, 1)
    sample_rng = rngmod.make_rng(seed, rngmod.TRAINING, 2)
    env_rng = rngmod.make_rng(seed, rngmod.TRAINING, 3)
    bundle = AgentBundle.create(env.num_users, env.num_clusters, env.num_configs, hyper, init_rng, static=env.static)
    bundle.meta = {"seed": seed, "objective": env.cfg.objective, "num_aps": env.num_aps}
    cols = ["episode", "step", "reward"] + [f"rate_user_{k}" for k in range(env.num_users)]
    cols += ["epsilon", "sigma", "critic_loss", "actor_q"]
    if not env.static:
        cols.append("q_loss")
    log = TrainingLog(cols)
    step = 0
    updates = 0
    for ep in range(hyper.episodes):
        state = env.reset(env_rng)
        rewards, rates = [], []
        closs, aq, qloss = [], [], []
        for _ in range(hyper.steps):
            sigma, eps = hyper.schedule(step)
            action = bundle.act(state.sinr, explore_rng, sigma, eps)
            nxt, reward, info = env.step(state, action)
            bundle.buffer.add(normalize_state(state.sinr), info.weights.reshape(-1), action.cluster, reward,
                              normalize_state(nxt.sinr))
            rewards.append(reward)
            rates.append(info.rates)
            state = nxt
            step += 1
            if len(bundle.buffer) >= hyper.minibatch:
                batch = bundle.buffer.sample(sample_rng, hyper.minibatch)
                d = ddpg_update(bundle, batch, hyper)
                closs.append(d["critic_loss"])
                aq.append(d["actor_q"])
                if not bundle.static:
                    qloss.append(ddqn_update(bundle.qnet, bundle.qnet_target, batch, hyper, bundle.q_opt)["q_loss"])
                updates += 1
                if updates % hyper.target_period == 0:
                    update_targets(bundle, hyper)
        mean_rates = np.mean(rates, axis=0)
        row = [ep, step, float(np.mean(rewards))] + [float(r) for r in mean_rates]
        row += [float(eps), float(sigma), float(np.mean(closs)) if closs else math.nan,
                float(np.mean(aq)) if aq else math.nan]
        if not env.static:
            row.append(float(np.mean(qloss)) if qloss else math.nan)
        log.rows.append(row)
        if progress is not None:
            progress(ep, row)
    return TrainingResult(log, bundle)
