"""Special-function kernel: Gamma, regularized incomplete gamma, Gauss 2F1
on the non-positive real axis, and the Whittaker W function.

Everything here is real-valued double precision. Series routines report
whether they converged instead of silently returning garbage.
"""

import math
from dataclasses import dataclass

import numpy as np

SERIES_RTOL = 1e-15
MAX_TERMS = 10_000
_RESCALE = 1e250
_LOG_RESCALE = math.log(_RESCALE)


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class EvalResult:
    """Value of a series or quadrature evaluation.

    ``log_abs`` and ``sign`` carry the value in log form so callers can
    combine results whose magnitude over- or underflows a double.
    """

    value: float
    converged: bool
    terms_used: int
    log_abs: float = float("nan")
    sign: float = 1.0

    @classmethod
    def from_log(cls, log_abs, sign, converged, terms_used):
        if sign == 0.0:
            return cls(0.0, converged, terms_used, -math.inf, 0.0)
        try:
            value = sign * math.exp(log_abs)
        except OverflowError:
            value = sign * math.inf
        return cls(value, converged, terms_used, log_abs, sign)


def gamma_fn(z):
    """Gamma function for real z > 0."""
    z = float(z)
    if not z > 0.0 or not math.isfinite(z):
        raise DomainError(f"gamma_fn needs a finite z > 0, got {z}")
    return math.gamma(z)


def lower_incomplete_gamma(a, x):
    """Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).

    Power series below x = a + 1, Lentz continued fraction for Q above.
    """
    a = float(a)
    x = float(x)
    if not a > 0.0 or not math.isfinite(a):
        raise DomainError(f"need a > 0, got {a}")
    if not x >= 0.0:
        raise DomainError(f"need x >= 0, got {x}")
    if x == 0.0:
        return EvalResult(0.0, True, 0, -math.inf, 0.0)
    if math.isinf(x):
        return EvalResult(1.0, True, 0, 0.0)
    log_pref = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        # sum_n x^n / (a (a+1) ... (a+n))
        term = 1.0 / a
        total = term
        ap = a
        for n in range(1, MAX_TERMS + 1):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * SERIES_RTOL:
                p = math.exp(log_pref + math.log(total))
                return EvalResult(min(p, 1.0), True, n + 1, math.log(min(p, 1.0)))
        p = math.exp(log_pref + math.log(total))
        return EvalResult(min(p, 1.0), False, MAX_TERMS + 1)
    # continued fraction for Q(a, x), modified Lentz
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for n in range(1, MAX_TERMS + 1):
        an = -n * (n - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < SERIES_RTOL:
            q = math.exp(log_pref) * h
            p = max(0.0, 1.0 - q)
            return EvalResult(p, True, n, math.log(p) if p > 0 else -math.inf, 1.0 if p > 0 else 0.0)
    q = math.exp(log_pref) * h
    p = max(0.0, 1.0 - q)
    return EvalResult(p, False, MAX_TERMS)


def _hyp_series(a, b, c, z):
    """Direct 2F1 power series for |z| < 1.

    Returns (log|sum|, sign, converged, terms, cancellation) where
    cancellation = sum|t_n| / |sum t_n|. Partial sums are rescaled when they
    grow past 1e250 so that large parameters do not overflow.
    """
    term = 1.0
    total = 1.0
    abs_total = 1.0
    log_scale = 0.0
    converged = False
    n = 0
    for n in range(MAX_TERMS):
        num = (a + n) * (b + n)
        den = (c + n) * (n + 1.0)
        ratio = num / den * z
        term *= ratio
        if term == 0.0:
            converged = True
            break
        total += term
        abs_total += abs(term)
        if abs(total) > _RESCALE:
            term /= _RESCALE
            total /= _RESCALE
            abs_total /= _RESCALE
            log_scale += _LOG_RESCALE
        r = abs((a + n + 1) * (b + n + 1) / ((c + n + 1) * (n + 2.0)) * z)
        if r < 1.0 and abs(term) / (1.0 - r) <= SERIES_RTOL * abs(total):
            converged = True
            break
    terms = n + 2
    if total == 0.0:
        return -math.inf, 0.0, converged, terms, math.inf
    cancel = abs_total / abs(total)
    return math.log(abs(total)) + log_scale, math.copysign(1.0, total), converged, terms, cancel


def _check_c(c):
    if c <= 0 and float(c).is_integer():
        raise DomainError(f"2F1 undefined for non-positive integer c = {c}")


def gauss_2f1(a, b, c, z, method="auto"):
    """Gauss hypergeometric 2F1(a, b; c; z) for real z <= 0.

    Candidates are the direct series (|z| < 1) and the two Pfaff forms
    (1-z)^{-a} 2F1(a, c-b; c; t) and (1-z)^{-b} 2F1(c-a, b; c; t) with
    t = z/(z-1) in [0, 1). ``auto`` keeps the converged candidate with the
    least cancellation.
    """
    a, b, c, z = float(a), float(b), float(c), float(z)
    if not z <= 0.0:
        raise DomainError(f"gauss_2f1 supports z <= 0 only, got {z}")
    _check_c(c)
    if z == 0.0:
        return EvalResult(1.0, True, 1, 0.0, 1.0)
    if method not in ("auto", "direct", "pfaff_a", "pfaff_b"):
        raise ValueError(f"unknown method {method!r}")

    t = z / (z - 1.0)
    log1mz = math.log1p(-z)
    candidates = []
    if method in ("auto", "direct") and abs(z) < 1.0:
        la, s, ok, n, cancel = _hyp_series(a, b, c, z)
        candidates.append((cancel, 0, la, s, ok, n))
    if method in ("auto", "pfaff_a"):
        la, s, ok, n, cancel = _hyp_series(a, c - b, c, t)
        candidates.append((cancel, 1, la - a * log1mz, s, ok, n))
    if method in ("auto", "pfaff_b"):
        la, s, ok, n, cancel = _hyp_series(c - a, b, c, t)
        candidates.append((cancel, 2, la - b * log1mz, s, ok, n))
    if not candidates:
        raise DomainError(f"direct series needs |z| < 1, got {z}")

    pool = [cand for cand in candidates if cand[4]] or candidates
    cancel, _, la, s, ok, n = min(pool, key=lambda cand: (cand[0], cand[1]))
    # a representation that lost more than ~7 digits to cancellation is not trusted
    ok = ok and cancel < 1e8
    return EvalResult.from_log(la, s, ok, n)


def _log_hyperu_integral(a, b, x, h=0.25, max_halvings=6):
    """log U(a, b, x) for a > 0, x > 0 from
    U = 1/Gamma(a) int_0^inf e^{-xt} t^{a-1} (1+t)^{b-a-1} dt.

    With t = e^u the integrand is smooth and decays double-exponentially
    on the right and exponentially on the left, so the trapezoid rule in u
    converges geometrically. Accuracy is checked by halving the step.
    """
    cpow = b - a - 1.0

    def psi(u):
        return a * u - x * np.exp(u) + cpow * np.logaddexp(0.0, u)

    # bracket the region where the integrand is within e^-60 of its peak
    u0 = math.log(max(a + max(cpow, 0.0), 1e-3) / x)
    lo, hi = u0 - 10.0, u0 + 10.0
    for _ in range(200):
        grid = np.linspace(lo, hi, 801)
        vals = psi(grid)
        top = vals.max()
        grew = False
        if vals[0] > top - 60.0:
            lo -= max(10.0, hi - lo)
            grew = True
        if vals[-1] > top - 60.0:
            hi += 2.0
            grew = True
        if not grew:
            break
    else:
        return float("nan"), False, 0

    def trap(step):
        n = int(math.ceil((hi - lo) / step))
        u = lo + step * np.arange(n + 1)
        v = psi(u)
        m = v.max()
        return float(m + math.log(np.exp(v - m).sum() * step)), n + 1

    prev, used = trap(h)
    for _ in range(max_halvings):
        h /= 2.0
        cur, used = trap(h)
        if abs(cur - prev) < 1e-14 * max(1.0, abs(cur)):
            return cur - math.lgamma(a), True, used
        prev = cur
    return prev - math.lgamma(a), False, used


def log_hyperu(a, b, x):
    """log U(a, b, x) (Tricomi) for x > 0, with U > 0 assumed.

    Supported: a > 0 directly, 1 + a - b > 0 via the Kummer relation
    U(a, b, x) = x^{1-b} U(1+a-b, 2-b, x), and a = 0 where U = 1.
    Returns (log U, converged, nodes used).
    """
    if not x > 0.0:
        raise DomainError(f"need x > 0, got {x}")
    if a == 0.0:
        return 0.0, True, 0
    if a > 0.0:
        return _log_hyperu_integral(a, b, x)
    a2 = 1.0 + a - b
    if a2 > 0.0:
        lu, ok, n = _log_hyperu_integral(a2, 2.0 - b, x)
        return (1.0 - b) * math.log(x) + lu, ok, n
    raise DomainError(f"U({a}, {b}, x) outside the supported parameter region")


def log_whittaker_w(lam, mu, x):
    """log W_{lam,mu}(x) via W = e^{-x/2} x^{mu+1/2} U(mu-lam+1/2, 1+2mu, x)."""
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"whittaker_w needs x > 0, got {x}")
    lu, ok, n = log_hyperu(mu - lam + 0.5, 1.0 + 2.0 * mu, x)
    return float(-0.5 * x + (mu + 0.5) * math.log(x) + lu), ok, n


def whittaker_w(lam, mu, x):
    """Whittaker function W_{lam,mu}(x) for real x > 0."""
    logw, ok, n = log_whittaker_w(float(lam), float(mu), x)
    if not math.isfinite(logw):
        return EvalResult(float("nan"), False, n)
    return EvalResult.from_log(logw, 1.0, ok, n)
