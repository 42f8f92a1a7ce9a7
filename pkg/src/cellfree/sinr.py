"""Per-user uplink SINR for the static, clustered and clustered-with-SIC
receivers.

Every regime reduces to per-antenna power weights omega_mk = w_{c(m),k}^2 |G_mk|^2
(static: singleton clusters, G = 1). For user k the received quantities are
sums of coefficient * |g_mj|^2 over links (m, j):

  desired               omega_mk p_k a_mk^2                          on (m, k)
  iui                   omega_mk p_l a_ml^2,      l interfering      on (m, l)
  pilot contamination   omega_mk p_k a_mk^2 |phi_mk^H phi_ml|^2      on (m, l), l != k
                        omega_mk p_l a_ml^2 |phi_ml^H phi_mj|^2      on (m, j), l != k, j != l
  noise (sigma_dot)     sum_m omega_mk (sigma_m^2/2 sum_l p_l + sigma~_m^2/2)

with a_mk = E_mk sqrt(tau_p rho_k). Dividing by sigma_dot gives X / (Y + 1).
"""

from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterConfig

ROLES = ("desired", "iui", "pilot_contamination", "awgn_estimation")


class SinrError(ValueError):
    pass


class SicOrderError(SinrError):
    pass


@dataclass(frozen=True)
class GammaTerm:
    shape: float
    rate: float
    role: str = "desired"

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise SinrError(f"Gamma term needs positive shape and rate, got ({self.shape}, {self.rate})")
        if self.role not in ROLES:
            raise SinrError(f"unknown role {self.role!r}")

    @property
    def mean(self):
        return self.shape / self.rate

    @property
    def variance(self):
        return self.shape / self.rate ** 2


@dataclass(frozen=True)
class SinrBreakdown:
    value: float
    numerator_terms: list = field(default_factory=list)
    denominator_terms: list = field(default_factory=list)
    noise_floor: float = 1.0
    signal: float = 0.0
    interference: float = 0.0
    noise: float = 0.0


@dataclass(frozen=True)
class _LinkCoefficients:
    desired: np.ndarray  # (M,) on links (m, k)
    iui: np.ndarray  # (M, K) on links (m, l)
    contamination_own: np.ndarray  # (M, K) on links (m, l)
    contamination_cross: np.ndarray  # (M, K, K) [m, l, j] on links (m, j)
    sigma_dot: float


def noise_unit(real):
    """Per-antenna noise gain: sigma_m^2/2 * sum_l p_l + sigma~_m^2/2."""
    return real.pilot_noise_var / 2.0 * real.user_powers.sum() + real.noise_var / 2.0


def _power_amplitudes(real):
    return real.user_powers[None, :] * real.est_amplitude ** 2


def link_coefficients(real, omega, interferers, k):
    """Shared term enumeration for user k given per-antenna weights omega (M,)
    and a boolean mask of users whose signal remains as IUI."""
    pa = _power_amplitudes(real)
    ov2 = real.pilot_overlap ** 2
    mask = np.asarray(interferers, dtype=float).copy()
    mask[k] = 0.0
    others = np.ones(real.num_users)
    others[k] = 0.0
    desired = omega * pa[:, k]
    iui = omega[:, None] * pa * mask[None, :]
    cont_own = (omega * pa[:, k])[:, None] * ov2[:, k, :]
    cont_cross = omega[:, None, None] * (pa * others[None, :])[:, :, None] * ov2
    sigma_dot = float(np.sum(omega * noise_unit(real)))
    return _LinkCoefficients(desired, iui, cont_own, cont_cross, sigma_dot)


def _realize(real, coeffs, k, with_terms):
    g2 = np.abs(real.true_channels) ** 2
    signal = float(np.sum(coeffs.desired * g2[:, k]))
    interference = float(
        np.sum(coeffs.iui * g2)
        + np.sum(coeffs.contamination_own * g2)
        + np.sum(coeffs.contamination_cross * g2[:, None, :])
    )
    sd = coeffs.sigma_dot
    if signal == 0.0:
        value = 0.0
    elif sd > 0:
        value = (signal / sd) / (interference / sd + 1.0)
    else:
        value = signal / interference if interference > 0 else np.inf
    num_terms, den_terms = [], []
    if with_terms:
        num_terms, den_terms = _gamma_terms(real, coeffs, k)
    return SinrBreakdown(value, num_terms, den_terms, 1.0, signal, interference, sd)


def _gamma_terms(real, coeffs, k):
    if not coeffs.sigma_dot > 0:
        raise SinrError("parametric terms need a positive noise level")
    shape = real.fading_shape
    base_rate = real.gamma_rates() * coeffs.sigma_dot
    num = [GammaTerm(float(shape[m, k]), float(base_rate[m, k] / c), "desired")
           for m, c in enumerate(coeffs.desired) if c > 0]
    if not num:
        raise SinrError(f"user {k} has no desired-signal term (all weights zero)")
    den = []
    for role, arr in (("iui", coeffs.iui), ("pilot_contamination", coeffs.contamination_own)):
        for m, j in zip(*np.nonzero(arr > 0)):
            den.append(GammaTerm(float(shape[m, j]), float(base_rate[m, j] / arr[m, j]), role))
    cc = coeffs.contamination_cross
    for m, l, j in zip(*np.nonzero(cc > 0)):
        den.append(GammaTerm(float(shape[m, j]), float(base_rate[m, j] / cc[m, l, j]), "pilot_contamination"))
    return num, den


def _check_weights(w):
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or np.any(w > 1) or not np.all(np.isfinite(w)):
        raise SinrError("beamforming weights must lie in [0, 1]")
    return w


def _user_weights(w, k, width):
    w = _check_weights(w)
    if w.ndim == 2:
        w = w[k]
    if w.shape != (width,):
        raise SinrError(f"expected {width} weights for user {k}, got shape {w.shape}")
    return w


def _gain_matrix(gains, real):
    g = getattr(gains, "gains", gains)
    if g is None:
        return np.ones((real.num_aps, real.num_users))
    g = np.asarray(g)
    if g.shape != (real.num_aps, real.num_users):
        raise SinrError(f"gains must be M x K, got {g.shape}")
    return g


def antenna_weights(cluster, w_k, gains_k):
    """omega_m = w_{c(m)}^2 |G_m|^2 for one user."""
    idx = np.asarray(cluster.assignment)
    return w_k[idx] ** 2 * np.abs(gains_k) ** 2


def dynamic_sinr(real, cluster, w, gains, k, with_terms=True, interferers=None):
    """SINR of user k with clustered APs; w holds M~ weights for user k (or
    the full K x M~ matrix), gains the per-antenna combining gains (M x K)."""
    if cluster.num_aps != real.num_aps:
        raise SinrError("cluster configuration does not match the number of APs")
    w_k = _user_weights(w, k, cluster.num_clusters)
    g = _gain_matrix(gains, real)
    omega = antenna_weights(cluster, w_k, g[:, k])
    if interferers is None:
        interferers = np.ones(real.num_users, dtype=bool)
    coeffs = link_coefficients(real, omega, interferers, k)
    return _realize(real, coeffs, k, with_terms)


def static_sinr(real, w, k, with_terms=True):
    """SINR of user k with every AP processed individually (unit gains)."""
    singles = ClusterConfig.singletons(real.num_aps)
    return dynamic_sinr(real, singles, w, None, k, with_terms)


def sic_metrics(real, gains, powers=None):
    p = real.user_powers if powers is None else np.asarray(powers, dtype=float)
    g = _gain_matrix(gains, real)
    return p * np.sum(np.abs(g) ** 2 * np.abs(real.estimated_channels) ** 2, axis=0)


def sic_order_users(real, cluster=None, gains=None, powers=None):
    """Users sorted by ascending weighted power gain; ties keep index order.

    Position 0 is the weakest user: it is detected last, after every
    stronger user has been cancelled.
    """
    metric = sic_metrics(real, gains, powers)
    return tuple(int(i) for i in np.argsort(metric, kind="stable"))


def check_sic_order(real, gains, order, powers=None, rtol=1e-12):
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(real.num_users)):
        raise SicOrderError(f"{order} is not a permutation of the users")
    metric = sic_metrics(real, gains, powers)
    for a, b in zip(order[:-1], order[1:]):
        if metric[a] > metric[b] * (1.0 + rtol) and metric[a] - metric[b] > 0:
            raise SicOrderError(f"user {a} is placed before weaker user {b}")
    return order


def remaining_interferers(order, k):
    """Mask of users still interfering with k after SIC: those weaker than k."""
    mask = np.zeros(len(order), dtype=bool)
    pos = order.index(k)
    mask[list(order[:pos])] = True
    return mask


def sic_sinr(real, cluster, w, gains, sic_order, k, with_terms=True):
    """SINR of user k when every stronger user is decoded and subtracted first.
    Pilot-contamination sums still run over all users."""
    order = check_sic_order(real, gains, sic_order)
    return dynamic_sinr(real, cluster, w, gains, k, with_terms, remaining_interferers(order, k))


# Batched evaluation used by the Monte-Carlo engine and the solvers. It
# computes the same sums as link_coefficients without materializing the
# per-term lists.

def batch_sinr(g2, omega, interferers, real_like):
    """SINR for a batch.

    g2: (B, M, K) |g|^2; omega: (B, M, K) per-antenna weights (column k is
    user k's); interferers: (B, K, K) or (K, K) mask [k, l]. real_like
    supplies powers, amplitudes, overlaps and noise.
    """
    pa = _power_amplitudes(real_like)
    rx = pa[None] * g2  # p_l a_ml^2 |g_ml|^2
    inter = np.asarray(interferers, dtype=float)
    inter = inter * (1.0 - np.eye(inter.shape[-1]))
    if inter.ndim == 2:
        iui_field = rx @ inter.T
    else:
        iui_field = np.matmul(rx, np.swapaxes(inter, -1, -2))
    signal = np.sum(omega * rx, axis=1)
    interference = np.sum(omega * iui_field, axis=1)
    ov2 = real_like.pilot_overlap ** 2
    if np.any(ov2 > 0):
        q = np.einsum("mkl,bml->bmk", ov2, g2)  # sum_j |phi_k^H phi_j|^2 |g_mj|^2
        own = pa[None] * q
        cross = own.sum(axis=2, keepdims=True) - own
        interference = interference + np.sum(omega * own, axis=1) + np.sum(omega * cross, axis=1)
    sd = np.einsum("bmk,m->bk", omega, noise_unit(real_like))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(sd > 0, (signal / sd) / (interference / sd + 1.0), signal / interference)
    return np.where(signal == 0.0, 0.0, out)
