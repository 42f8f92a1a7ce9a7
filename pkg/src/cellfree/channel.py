"""Network geometry, Nakagami fading, pilot books and MMSE channel estimates.

Conventions: g_mk = L_mk^{-kappa} h_mk, |h_mk|^2 ~ Gamma(M_mk, rate M_mk/Omega_mk),
so |g_mk|^2 ~ Gamma(M_mk, rate M_mk L_mk^{2 kappa} / Omega_mk). Arrays are indexed
[m, k] (AP, user); batched draws carry a leading batch axis.
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .units import DISC_RADIUS_1KM2, noise_variance

SMALL_DISC_RADIUS = 18.0
OVERLAP_FLOOR = 1e-12


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class TopologyConfig:
    num_aps: int
    num_users: int
    coverage_radius: float = 564.0
    path_loss_exponent: float = 2.0
    placement: str = "uniform_disc"
    ap_coordinates: tuple = None
    user_coordinates: tuple = None
    # users closer than this to an AP are redrawn (coincident points have L = 0)
    min_distance: float = 1.0

    def __post_init__(self):
        if self.num_aps < 1 or self.num_users < 1:
            raise ChannelError("need at least one AP and one user")
        if self.path_loss_exponent < 2:
            raise ChannelError(f"path-loss exponent must be >= 2, got {self.path_loss_exponent}")
        if not self.coverage_radius > 0:
            raise ChannelError("coverage radius must be positive")
        if self.placement not in ("uniform_disc", "fixed_coordinates"):
            raise ChannelError(f"unknown placement {self.placement!r}")
        if self.placement == "fixed_coordinates":
            if self.ap_coordinates is None or self.user_coordinates is None:
                raise ChannelError("fixed_coordinates placement needs both coordinate lists")
            if np.shape(self.ap_coordinates) != (self.num_aps, 2):
                raise ChannelError("ap_coordinates must be M x 2")
            if np.shape(self.user_coordinates) != (self.num_users, 2):
                raise ChannelError("user_coordinates must be K x 2")


@dataclass(frozen=True)
class Topology:
    ap_xy: np.ndarray
    user_xy: np.ndarray
    distances: np.ndarray
    path_loss_exponent: float


def sample_disc(n, radius, rng):
    """n points uniform over a disc centred at the origin."""
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def _pairwise(ap_xy, user_xy):
    diff = ap_xy[:, None, :] - user_xy[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def generate_topology(cfg, seed):
    if cfg.placement == "fixed_coordinates":
        ap_xy = np.asarray(cfg.ap_coordinates, dtype=float)
        user_xy = np.asarray(cfg.user_coordinates, dtype=float)
        dist = _pairwise(ap_xy, user_xy)
        if np.any(dist <= 0):
            raise ChannelError("an AP and a user share a location")
        return Topology(ap_xy, user_xy, dist, cfg.path_loss_exponent)

    rng = rngmod.as_rng(seed, rngmod.TOPOLOGY)
    ap_xy = sample_disc(cfg.num_aps, cfg.coverage_radius, rng)
    user_xy = sample_disc(cfg.num_users, cfg.coverage_radius, rng)
    for _ in range(10_000):
        dist = _pairwise(ap_xy, user_xy)
        bad = np.any(dist < cfg.min_distance, axis=0)
        if not bad.any():
            return Topology(ap_xy, user_xy, dist, cfg.path_loss_exponent)
        user_xy[bad] = sample_disc(int(bad.sum()), cfg.coverage_radius, rng)
    raise ChannelError("could not place users away from every AP; lower min_distance")


@dataclass(frozen=True)
class FadingConfig:
    shape: object = 1.0
    spread: object = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.shape) <= 0) or np.any(np.asarray(self.spread) <= 0):
            raise ChannelError("Nakagami shape and spread must be positive")

    def arrays(self, num_aps, num_users):
        shp = np.broadcast_to(np.asarray(self.shape, dtype=float), (num_aps, num_users))
        spr = np.broadcast_to(np.asarray(self.spread, dtype=float), (num_aps, num_users))
        return shp.copy(), spr.copy()


def sample_fading(fading, num_aps, num_users, rng, batch=None):
    """Complex Nakagami-m small-scale coefficients h with uniform phase.

    |h|^2 is drawn from numpy's Gamma sampler (Marsaglia-Tsang).
    """
    shp, spr = fading.arrays(num_aps, num_users)
    size = (num_aps, num_users) if batch is None else (batch, num_aps, num_users)
    power = rng.gamma(np.broadcast_to(shp, size), np.broadcast_to(spr / shp, size))
    phase = rng.random(size) * (2.0 * np.pi)
    return np.sqrt(power) * np.exp(1j * phase)


@dataclass(frozen=True)
class PilotBook:
    pilots: np.ndarray  # (M, K, tau_p) complex, unit-norm rows
    pilot_power: np.ndarray  # (K,) watts
    coherence_length: int = 200

    def __post_init__(self):
        norms = np.sum(np.abs(self.pilots) ** 2, axis=-1)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise ChannelError("pilot sequences must have unit norm")
        if self.pilot_length > self.coherence_length:
            raise ChannelError("pilot length exceeds the coherence interval")
        if np.any(np.asarray(self.pilot_power) < 0):
            raise ChannelError("pilot power must be non-negative")

    @property
    def pilot_length(self):
        return self.pilots.shape[-1]

    def overlaps(self):
        """|phi_mk^H phi_ml| for every AP, as an (M, K, K) array.

        Round-off below 1e-12 is snapped to 0 so orthogonal sequences give
        exactly no contamination terms.
        """
        gram = np.abs(np.einsum("mkt,mlt->mkl", self.pilots.conj(), self.pilots))
        return np.where(gram < OVERLAP_FLOOR, 0.0, gram)


def orthonormal_pilots(num_aps, num_users, pilot_length=None, pilot_power=0.1, coherence_length=200):
    """Columns of a unitary DFT matrix, shared by all APs; needs tau_p >= K."""
    tau = num_users if pilot_length is None else int(pilot_length)
    if tau < num_users:
        raise ChannelError(f"orthonormal pilots need tau_p >= K ({tau} < {num_users})")
    t = np.arange(tau)
    rows = np.exp(2j * np.pi * np.outer(np.arange(num_users), t) / tau) / math.sqrt(tau)
    pilots = np.broadcast_to(rows, (num_aps, num_users, tau)).copy()
    power = np.broadcast_to(np.asarray(pilot_power, dtype=float), (num_users,)).copy()
    return PilotBook(pilots, power, coherence_length)


def random_pilots(num_aps, num_users, pilot_length, rng, pilot_power=0.1, coherence_length=200):
    """Unit-norm complex Gaussian sequences, shared by all APs."""
    raw = rng.standard_normal((num_users, pilot_length)) + 1j * rng.standard_normal((num_users, pilot_length))
    rows = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    pilots = np.broadcast_to(rows, (num_aps, num_users, pilot_length)).copy()
    power = np.broadcast_to(np.asarray(pilot_power, dtype=float), (num_users,)).copy()
    return PilotBook(pilots, power, coherence_length)


def estimation_constants(distances, kappa, pilots, estimator_scale=None):
    """MMSE constants E_mk, which depend only on geometry and pilots.

    E_mk = sqrt(tau_p rho_k) L_mk^{-kappa} / (rho_c sum_{l!=k} rho_k L_ml^{-kappa} |phi_mk^H phi_ml|^2 + 1).
    rho_c defaults to tau_p.
    """
    tau = pilots.pilot_length
    rho = np.asarray(pilots.pilot_power, dtype=float)
    rho_c = float(tau) if estimator_scale is None else float(estimator_scale)
    lk = distances ** (-kappa)
    ov2 = _offdiag(pilots.overlaps()) ** 2
    contamination = np.einsum("mkl,ml->mk", ov2, lk) * rho[None, :]
    return np.sqrt(tau * rho)[None, :] * lk / (rho_c * contamination + 1.0)


def _offdiag(a):
    k = a.shape[-1]
    return a * (1.0 - np.eye(k))


def mmse_estimate(g, constants, pilots, pilot_noise_var, rng=None):
    """Channel estimate built from the three parts of the MMSE expression:
    own channel, pilot-contaminating channels, projected pilot noise.

    g may carry a leading batch axis. With zero pilot noise no randomness
    is consumed.
    """
    tau = pilots.pilot_length
    amp = constants * np.sqrt(tau * np.asarray(pilots.pilot_power))[None, :]
    ov = _offdiag(pilots.overlaps())
    leak = np.einsum("mkl,...ml->...mk", ov, g)
    est = amp * (g + leak)
    var = np.asarray(pilot_noise_var, dtype=float)
    if np.any(var > 0):
        if rng is None:
            raise ChannelError("pilot noise needs a random stream")
        shape = g.shape[:-2] + (g.shape[-2], tau)
        sd = np.sqrt(np.broadcast_to(var, (g.shape[-2],)) / 4.0)[:, None]
        eta = sd * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        proj = np.abs(np.einsum("mkt,...mt->...mk", pilots.pilots.conj(), eta))
        est = est + constants * proj
    return est


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to build a network and draw realizations from it.

    Powers are linear watts. ``ideal_csi`` selects the regime where the
    estimate equals the true channel (orthonormal pilots, no pilot noise):
    E_mk is set to 1/sqrt(tau_p rho_k) so that E sqrt(tau_p rho) = 1.
    """

    topology: TopologyConfig
    fading: FadingConfig = field(default_factory=FadingConfig)
    pilot_length: int = None
    pilot_power: float = 0.1
    pilot_kind: str = "orthonormal"
    coherence_length: int = 200
    user_power: object = 0.1
    max_power: object = None
    noise_psd_dbm_hz: float = -169.0
    bandwidth_hz: float = 1.0
    pilot_noise: bool = False
    ideal_csi: bool = True
    estimator_scale: float = None

    def __post_init__(self):
        if self.pilot_kind not in ("orthonormal", "random"):
            raise ChannelError(f"unknown pilot kind {self.pilot_kind!r}")
        if self.ideal_csi and (self.pilot_kind != "orthonormal" or self.pilot_noise):
            raise ChannelError("ideal CSI needs orthonormal pilots without pilot noise")
        p = np.asarray(self.user_power, dtype=float)
        pmax = p if self.max_power is None else np.asarray(self.max_power, dtype=float)
        if np.any(p < 0) or np.any(p > pmax * (1 + 1e-12)):
            raise ChannelError("user powers must satisfy 0 <= p_k <= P_k")

    def with_users(self, num_users):
        topo = dataclasses.replace(self.topology, num_users=num_users)
        return dataclasses.replace(self, topology=topo)

    def with_aps(self, num_aps):
        topo = dataclasses.replace(self.topology, num_aps=num_aps)
        return dataclasses.replace(self, topology=topo)


@dataclass(frozen=True)
class NetworkRealization:
    distances: np.ndarray
    path_loss_exponent: float
    small_scale: np.ndarray
    true_channels: np.ndarray
    estimated_channels: np.ndarray
    estimation_constants: np.ndarray
    pilot_overlap: np.ndarray  # (M, K, K), zero diagonal
    pilot_length: int
    pilot_power: np.ndarray
    noise_var: np.ndarray  # data-phase sigma~^2 per AP
    pilot_noise_var: np.ndarray  # training-phase sigma^2 per AP
    user_powers: np.ndarray
    max_powers: np.ndarray
    fading_shape: np.ndarray
    fading_spread: np.ndarray

    @property
    def num_aps(self):
        return self.distances.shape[0]

    @property
    def num_users(self):
        return self.distances.shape[1]

    @property
    def est_amplitude(self):
        """E_mk sqrt(tau_p rho_k): the effective amplitude of the own channel in the estimate."""
        return self.estimation_constants * np.sqrt(self.pilot_length * self.pilot_power)[None, :]

    def with_powers(self, powers):
        p = np.broadcast_to(np.asarray(powers, dtype=float), (self.num_users,)).copy()
        if np.any(p < 0) or np.any(p > self.max_powers * (1 + 1e-12)):
            raise ChannelError("user powers must satisfy 0 <= p_k <= P_k")
        return dataclasses.replace(self, user_powers=p)

    def gamma_rates(self):
        """Rate of |g_mk|^2 in the Gamma(shape, rate) parameterization."""
        return self.fading_shape * self.distances ** (2 * self.path_loss_exponent) / self.fading_spread


class Network:
    """The fixed part of a scenario: geometry, pilots, powers, noise levels
    and the MMSE constants. Fading is drawn per realization."""

    def __init__(self, cfg, seed):
        self.cfg = cfg
        self.seed = seed
        topo_cfg = cfg.topology
        m, k = topo_cfg.num_aps, topo_cfg.num_users
        self.topology = generate_topology(topo_cfg, seed)
        self.kappa = float(topo_cfg.path_loss_exponent)
        tau = k if cfg.pilot_length is None else int(cfg.pilot_length)
        if cfg.pilot_kind == "orthonormal":
            self.pilots = orthonormal_pilots(m, k, tau, cfg.pilot_power, cfg.coherence_length)
        else:
            self.pilots = random_pilots(m, k, tau, rngmod.as_rng(seed, rngmod.PILOTS), cfg.pilot_power, cfg.coherence_length)
        self.noise_var = np.full(m, noise_variance(cfg.noise_psd_dbm_hz, cfg.bandwidth_hz))
        self.pilot_noise_var = self.noise_var.copy() if cfg.pilot_noise else np.zeros(m)
        self.user_powers = np.broadcast_to(np.asarray(cfg.user_power, dtype=float), (k,)).copy()
        pmax = cfg.user_power if cfg.max_power is None else cfg.max_power
        self.max_powers = np.broadcast_to(np.asarray(pmax, dtype=float), (k,)).copy()
        self.fading_shape, self.fading_spread = cfg.fading.arrays(m, k)
        if cfg.ideal_csi:
            self.constants = np.broadcast_to(1.0 / np.sqrt(tau * self.pilots.pilot_power), (m, k)).copy()
        else:
            self.constants = estimation_constants(self.topology.distances, self.kappa, self.pilots, cfg.estimator_scale)
        self.overlap = _offdiag(self.pilots.overlaps())

    @property
    def num_aps(self):
        return self.topology.distances.shape[0]

    @property
    def num_users(self):
        return self.topology.distances.shape[1]

    @property
    def distances(self):
        return self.topology.distances

    def draw_channels(self, rng, batch=None):
        """(h, g, g_hat) for one realization or a batch."""
        m, k = self.num_aps, self.num_users
        h = sample_fading(self.cfg.fading, m, k, rng, batch)
        g = self.distances ** (-self.kappa) * h
        if self.cfg.ideal_csi:
            g_hat = g
        else:
            g_hat = mmse_estimate(g, self.constants, self.pilots, self.pilot_noise_var, rng)
        return h, g, g_hat

    def realization(self, h, g, g_hat):
        return NetworkRealization(
            distances=self.distances,
            path_loss_exponent=self.kappa,
            small_scale=h,
            true_channels=g,
            estimated_channels=g_hat,
            estimation_constants=self.constants,
            pilot_overlap=self.overlap,
            pilot_length=self.pilots.pilot_length,
            pilot_power=self.pilots.pilot_power,
            noise_var=self.noise_var,
            pilot_noise_var=self.pilot_noise_var,
            user_powers=self.user_powers,
            max_powers=self.max_powers,
            fading_shape=self.fading_shape,
            fading_spread=self.fading_spread,
        )

    def draw(self, rng):
        return self.realization(*self.draw_channels(rng))


def draw_realization(cfg, seed, index=0):
    """One realization of a scenario; topology from `seed`, fading from (seed, index)."""
    net = Network(cfg, seed)
    return net.draw(rngmod.make_rng(seed, rngmod.FADING, index))


_ARRAY_FIELDS = ("estimation_constants", "pilot_overlap", "pilot_power", "noise_var", "pilot_noise_var",
                 "user_powers", "max_powers", "fading_shape", "fading_spread")


def export_realization(real, path):
    """Columnar text: one metadata comment line, a header, one row per link."""
    meta = {"path_loss_exponent": real.path_loss_exponent, "pilot_length": real.pilot_length}
    for name in _ARRAY_FIELDS:
        arr = np.asarray(getattr(real, name))
        meta[name] = {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}
    h = real.small_scale
    with open(path, "w") as fh:
        fh.write("# meta " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("m,k,L,re_g,im_g,re_ghat,im_ghat,re_h,im_h\n")
        for m in range(real.num_aps):
            for k in range(real.num_users):
                g, gh = real.true_channels[m, k], real.estimated_channels[m, k]
                fh.write(",".join(repr(float(v)) if i > 1 else str(v) for i, v in enumerate(
                    (m, k, real.distances[m, k], g.real, g.imag, gh.real, gh.imag, h[m, k].real, h[m, k].imag))) + "\n")


def import_realization(path):
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# meta "):
            raise ChannelError("missing metadata line")
        meta = json.loads(first[len("# meta "):])
        header = fh.readline().strip().split(",")
        rows = np.array([[float(v) for v in line.split(",")] for line in fh if line.strip()])
    col = {name: rows[:, i] for i, name in enumerate(header)}
    m_tot = int(col["m"].max()) + 1
    k_tot = int(col["k"].max()) + 1
    shape = (m_tot, k_tot)

    def grid(name):
        out = np.zeros(shape)
        out[col["m"].astype(int), col["k"].astype(int)] = col[name]
        return out

    arrays = {name: np.array(meta[name]["data"]).reshape(meta[name]["shape"]) for name in _ARRAY_FIELDS}
    return NetworkRealization(
        distances=grid("L"),
        path_loss_exponent=meta["path_loss_exponent"],
        small_scale=grid("re_h") + 1j * grid("im_h"),
        true_channels=grid("re_g") + 1j * grid("im_g"),
        estimated_channels=grid("re_ghat") + 1j * grid("im_ghat"),
        pilot_length=int(meta["pilot_length"]),
        **arrays,
    )
