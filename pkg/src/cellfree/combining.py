"""Per-cluster receive-combining gains: interference-aware Wiener-Hopf,
MRC, and unit gains. Gains come from the estimated channels.

Gains are stored per antenna as an (M, K) complex array: entry [m, k] is
the gain AP m applies inside its cluster when detecting user k.
"""

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
REGULARIZATION = 1e-10
METHODS = ("wiener_hopf", "mrc", "unit")


class ConditioningError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CombinerGains:
    gains: np.ndarray
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown combining method {self.method!r}")
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("combining gains must be finite")

    def cluster_vector(self, cluster, index, k):
        return self.gains[list(cluster.blocks()[index]), k]


def interference_covariance(g_hat, powers, noise_var, k):
    """R = sum_{l != k} p_l g_l g_l^H + diag(sigma~^2 / 2) over one cluster's antennas.

    g_hat: (N, K) estimates for the cluster's antennas.
    """
    others = [l for l in range(g_hat.shape[1]) if l != k]
    gl = g_hat[:, others]
    r = (gl * powers[others][None, :]) @ gl.conj().T
    r = r + np.diag(np.asarray(noise_var, dtype=float) / 2.0)
    return r


def _solve_hpd(r, b, strict=False):
    """Solve R x = b for Hermitian positive-definite R by Cholesky.

    An ill-conditioned R (condition number above 1e12) or a failed
    factorization raises ConditioningError when strict, otherwise the
    system is regularized with eps = 1e-10 trace(R)/N and the event logged.
    """
    if not np.allclose(r, r.conj().T, rtol=1e-10, atol=0.0):
        raise ConditioningError("covariance is not Hermitian")
    cond = np.linalg.cond(r)
    try:
        if not cond <= CONDITION_LIMIT:
            raise np.linalg.LinAlgError(f"condition number {cond:.3g}")
        chol = np.linalg.cholesky(r)
    except np.linalg.LinAlgError as exc:
        if strict:
            raise ConditioningError(str(exc)) from exc
        eps = REGULARIZATION * np.trace(r).real / r.shape[0]
        log.info("regularizing covariance solve (%s), eps=%.3g", exc, eps)
        chol = np.linalg.cholesky(r + eps * np.eye(r.shape[0]))
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(chol.conj().T, y)


def wiener_hopf_gains(real, cluster, k, powers=None, strict=False, out=None):
    """G_{m~k} = R_{m~}^{-1} g_hat_{m~k} for every cluster; fills column k."""
    p = real.user_powers if powers is None else np.asarray(powers, dtype=float)
    g_hat = real.estimated_channels
    gains = np.zeros((real.num_aps, real.num_users), dtype=complex) if out is None else out
    for block in cluster.blocks():
        idx = list(block)
        r = interference_covariance(g_hat[idx], p, real.noise_var[idx], k)
        gains[idx, k] = _solve_hpd(r, g_hat[idx, k], strict)
    return CombinerGains(gains, "wiener_hopf") if out is None else out


def mrc_gains(real, cluster, k, out=None):
    """G = 2 g_hat / sigma~^2 per antenna."""
    gains = np.zeros((real.num_aps, real.num_users), dtype=complex) if out is None else out
    gains[:, k] = 2.0 * real.estimated_channels[:, k] / real.noise_var
    return CombinerGains(gains, "mrc") if out is None else out


def unit_gains(real):
    return CombinerGains(np.ones((real.num_aps, real.num_users), dtype=complex), "unit")


def normalize_per_cluster(gains, cluster):
    """Scale every (cluster, user) gain vector to unit norm; zero vectors stay zero.

    Raw Wiener-Hopf and MRC magnitudes scale like 1/noise and differ by many
    decades between clusters, which would make the cross-cluster weights w
    meaningless. Only the direction inside a cluster carries combining
    information, so the SINR model uses unit-norm vectors.
    """
    out = np.array(gains, dtype=complex)
    for block in cluster.blocks():
        idx = list(block)
        norms = np.linalg.norm(out[idx], axis=0)
        out[idx] = out[idx] / np.where(norms > 0, norms, 1.0)
    return out


def combiner_gains(real, cluster, method="wiener_hopf", powers=None, strict=False, normalize=True):
    """Gains for all users under one method; unit-norm per cluster unless
    normalize=False (unit gains are always 1)."""
    if method == "unit":
        return unit_gains(real)
    gains = np.zeros((real.num_aps, real.num_users), dtype=complex)
    for k in range(real.num_users):
        if method == "wiener_hopf":
            wiener_hopf_gains(real, cluster, k, powers, strict, out=gains)
        elif method == "mrc":
            mrc_gains(real, cluster, k, out=gains)
        else:
            raise ValueError(f"unknown combining method {method!r}")
    if normalize:
        gains = normalize_per_cluster(gains, cluster)
    return CombinerGains(gains, method)


def post_combining_sinr(real, cluster, gains, k, powers=None):
    """Coherent per-cluster SINR p_k |G^H g_k|^2 / (G^H R G) for each cluster."""
    p = real.user_powers if powers is None else np.asarray(powers, dtype=float)
    g_hat = real.estimated_channels
    gmat = getattr(gains, "gains", gains)
    out = []
    for block in cluster.blocks():
        idx = list(block)
        gv = gmat[idx, k]
        r = interference_covariance(g_hat[idx], p, real.noise_var[idx], k)
        num = p[k] * abs(np.vdot(gv, g_hat[idx, k])) ** 2
        den = np.vdot(gv, r @ gv).real
        out.append(num / den if den > 0 else 0.0)
    return np.array(out)
