"""Closed-form outage machinery.

The SINR is modeled as X / (Y + c) with X and Y sums of independent Gamma
terms. Each sum is collapsed to one Gamma by matching its mean and
variance. With c = 0 the ratio X/Y of the two Gammas is beta-prime
distributed and its CDF is a single 2F1 evaluation. With c > 0 the
density involves a Whittaker W function.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import betaprime

from . import sinr as sinrmod
from .special_functions import (
    DomainError,
    gauss_2f1,
    log_hyperu,
    lower_incomplete_gamma,
)

CLAMP_TOL = 1e-12


class AnalyticsError(ValueError):
    pass


@dataclass(frozen=True)
class WSParams:
    shape: float
    rate: float
    source_term_count: int = 1

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise AnalyticsError(f"WS parameters must be positive: ({self.shape}, {self.rate})")

    @property
    def mean(self):
        return self.shape / self.rate

    @property
    def variance(self):
        return self.shape / self.rate ** 2


@dataclass(frozen=True)
class OutageQuery:
    """Outage of X / (Y + noise_floor) below threshold.

    noise_floor = 0 is the closed-form model; queries built from a SINR
    breakdown carry the normalized noise floor 1.
    """

    numerator: WSParams
    denominator: WSParams
    threshold: float
    noise_floor: float = 0.0

    def __post_init__(self):
        if not self.threshold > 0:
            raise AnalyticsError(f"threshold must be positive, got {self.threshold}")
        if self.noise_floor < 0:
            raise AnalyticsError("noise floor must be non-negative")


def welch_satterthwaite(terms):
    """Single Gamma with the mean and variance of a sum of independent Gammas."""
    terms = list(terms)
    if not terms:
        raise DomainError("cannot reduce an empty term list")
    shapes = np.array([t.shape for t in terms], dtype=float)
    rates = np.array([t.rate for t in terms], dtype=float)
    if np.all(rates == rates[0]):
        # common rate: the sum is exactly Gamma(sum of shapes, rate)
        return WSParams(float(math.fsum(shapes)), float(rates[0]), len(terms))
    # scale by the largest mean so that tiny or huge rates do not under/overflow
    means = shapes / rates
    ref = means.max()
    m = math.fsum(means / ref)
    v = math.fsum(shapes / (rates * ref) ** 2)
    return WSParams(m * m / v, m / (v * ref), len(terms))


def query_from_breakdown(breakdown, threshold):
    return OutageQuery(
        welch_satterthwaite(breakdown.numerator_terms),
        welch_satterthwaite(breakdown.denominator_terms),
        threshold,
        breakdown.noise_floor,
    )


def _log_beta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betaprime_cdf(a, b, x):
    """P(Z <= x) for Z ~ BetaPrime(a, b), via
    x^a Gamma(a+b) / (a Gamma(a) Gamma(b)) 2F1(a, a+b; 1+a; -x), valid for x <= 1."""
    if x == 0.0:
        return 0.0, True
    r = gauss_2f1(a, a + b, 1.0 + a, -x)
    if r.sign <= 0:
        return 0.0, r.converged
    logf = a * math.log(x) - math.log(a) - _log_beta(a, b) + r.log_abs
    return math.exp(logf), r.converged


def _clamp(p):
    if -CLAMP_TOL < p < 0.0:
        return 0.0
    if 1.0 < p <= 1.0 + CLAMP_TOL:
        return 1.0
    if not 0.0 <= p <= 1.0:
        raise AnalyticsError(f"outage probability {p} outside [0, 1]")
    return p


def outage_closed_form(a1, b1, a2, b2, threshold):
    """P(X/Y < threshold) for X ~ Gamma(a1, b1), Y ~ Gamma(a2, b2).

    P = 1 - x^{a2} Gamma(a1+a2) / (a2 Gamma(a1) Gamma(a2)) 2F1(a2, a1+a2; 1+a2; -x),
    x = b2 / (b1 threshold). For x > 1 the same form is applied to the
    reciprocal ratio Y/X (argument 1/x), which avoids both the slowly
    converging series and the cancellation in 1 - (value near 1).
    """
    if threshold <= 0:
        return 0.0
    if math.isinf(threshold):
        return 1.0
    x = b2 / (b1 * threshold)
    if x <= 1.0:
        f, ok = _betaprime_cdf(a2, a1, x)
        p = 1.0 - f
    else:
        p, ok = _betaprime_cdf(a1, a2, 1.0 / x)
    if not ok:
        raise AnalyticsError("hypergeometric series did not converge")
    return _clamp(p)


def outage_static(query):
    """Outage of the Gamma-ratio model; the noise floor is dropped (Y + 1 ~ Y)."""
    n, d = query.numerator, query.denominator
    return outage_closed_form(n.shape, n.rate, d.shape, d.rate, query.threshold)


def outage_query_static(real, w, k, threshold):
    return query_from_breakdown(sinrmod.static_sinr(real, w, k), threshold)


def outage_query_dynamic(real, cluster, w, gains, k, threshold):
    return query_from_breakdown(sinrmod.dynamic_sinr(real, cluster, w, gains, k), threshold)


def outage_dynamic(real, cluster, w, gains, k, threshold):
    """Clustered-receiver outage: the clustered term lists fed to the same
    closed form as the static receiver."""
    return outage_static(outage_query_dynamic(real, cluster, w, gains, k, threshold))


def log_sinr_pdf(query, gamma):
    """log density of X / (Y + c) at gamma.

    c = 0: beta-prime density. c > 0:
    f(z) = b1^a1 b2^a2 c^{a1+a2} z^{a1-1} e^{-b1 z c} U(a2, a1+a2+1, (b1 z + b2) c) / Gamma(a1),
    which is the Whittaker-W form with lam = (a1-a2+1)/2, mu = (a1+a2)/2.
    """
    a1, b1 = query.numerator.shape, query.numerator.rate
    a2, b2 = query.denominator.shape, query.denominator.rate
    c = query.noise_floor
    if gamma <= 0:
        return -math.inf
    s = b1 * gamma + b2
    if c == 0.0:
        return (a1 * math.log(b1) + a2 * math.log(b2) + (a1 - 1.0) * math.log(gamma)
                - (a1 + a2) * math.log(s) - _log_beta(a1, a2))
    lu, ok, _ = log_hyperu(a2, a1 + a2 + 1.0, s * c)
    if not ok:
        raise AnalyticsError("confluent hypergeometric integral did not converge")
    return (a1 * math.log(b1) + a2 * math.log(b2) + (a1 + a2) * math.log(c) + (a1 - 1.0) * math.log(gamma)
            - b1 * gamma * c + lu - math.lgamma(a1))


def sinr_pdf(query, gamma):
    return math.exp(log_sinr_pdf(query, gamma))


def integral_cdf(query, gamma):
    """P(X / (Y + c) <= gamma) = int_0^inf P(a1, b1 gamma (y + c)) f_Y(y) dy,
    with P the regularized lower incomplete gamma."""
    if gamma <= 0:
        return 0.0
    a1, b1 = query.numerator.shape, query.numerator.rate
    a2, b2 = query.denominator.shape, query.denominator.rate
    c = query.noise_floor

    def integrand(u):
        # u = b2 y is Gamma(a2, 1)
        y = u / b2
        lf = (a2 - 1.0) * math.log(u) - u - math.lgamma(a2) if u > 0 else -math.inf
        return lower_incomplete_gamma(a1, b1 * gamma * (y + c)).value * math.exp(lf)

    lo, hi = _gamma_support(a2)
    pts = [a2] if lo < a2 < hi else None
    val, _ = integrate.quad(integrand, lo, hi, points=pts, epsabs=1e-13, epsrel=1e-11, limit=400)
    return val


def _gamma_support(shape):
    """An interval holding all but ~1e-16 of a unit-rate Gamma(shape)."""
    sd = math.sqrt(shape)
    lo = max(0.0, shape - 12.0 * sd - 10.0)
    hi = shape + 14.0 * sd + 50.0
    return lo, hi


def closed_form_cdf(query, gamma):
    """Closed-form CDF of the Gamma-ratio model (noise floor dropped)."""
    if gamma <= 0:
        return 0.0
    n, d = query.numerator, query.denominator
    return outage_closed_form(n.shape, n.rate, d.shape, d.rate, gamma)


def integrate_pdf(query, upper, lower=0.0):
    """Integral of the density over [lower, upper], splitting at its bulk."""
    if upper <= lower:
        return 0.0
    pts = [p for p in _pdf_breakpoints(query) if lower < p < upper]
    edges = [lower] + pts + [upper]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(lambda z: sinr_pdf(query, z), a, b, epsabs=1e-13, epsrel=1e-11, limit=400)
        total += v
    return total


def _pdf_breakpoints(query):
    """Quantile-ish landmarks of X / Y for splitting quadrature ranges."""
    n, d = query.numerator, query.denominator
    scale = n.mean / d.mean
    return [scale * f for f in (1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0)]


@dataclass(frozen=True)
class ConsistencyReport:
    normalization_error: float
    max_dev_closed_form: float
    max_dev_integral_cdf: float
    grid: tuple
    consistent: bool
    tolerance: float
    integrated: tuple = ()
    closed_form: tuple = ()
    integral_cdf: tuple = ()

    def summary(self):
        return (f"normalization_error={self.normalization_error:.3e} "
                f"max_dev_closed_form={self.max_dev_closed_form:.3e} "
                f"max_dev_integral_cdf={self.max_dev_integral_cdf:.3e} consistent={self.consistent}")


def default_grid(query, points=20):
    """Thresholds spread over the 1%..99% range of the ratio model."""
    qs = np.linspace(0.01, 0.99, points)
    n, d = query.numerator, query.denominator
    scale = d.rate / n.rate
    return tuple(float(v) for v in betaprime.ppf(qs, n.shape, d.shape) * scale)


def cdf_consistency_check(query, grid=None, tol=1e-6, norm_tol=1e-3, points=20):
    """Integrate the density and compare it with the closed-form CDF and with
    the incomplete-gamma integral CDF at the query's own noise floor."""
    grid = tuple(default_grid(query, points)) if grid is None else tuple(float(g) for g in grid)
    # cumulative integration across sorted grid points
    order = sorted(range(len(grid)), key=lambda i: grid[i])
    acc = 0.0
    prev = 0.0
    integrated = [0.0] * len(grid)
    for i in order:
        g = grid[i]
        acc += integrate_pdf(query, g, prev)
        prev = g
        integrated[i] = acc
    total = acc + integrate_pdf(query, math.inf, prev)
    closed = tuple(closed_form_cdf(query, g) for g in grid)
    inc = tuple(integral_cdf(query, g) for g in grid)
    dev_closed = max(abs(v - c) for v, c in zip(integrated, closed))
    dev_integral = max(abs(v - c) for v, c in zip(integrated, inc))
    norm_err = abs(total - 1.0)
    ok = norm_err <= norm_tol and dev_closed <= tol and dev_integral <= tol
    return ConsistencyReport(norm_err, dev_closed, dev_integral, grid, ok, tol, tuple(integrated), closed, inc)
