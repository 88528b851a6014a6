"""Special functions and binomial tail probabilities.

Everything here is a pure function of its arguments. Binomial sums are
accumulated in log space so that terms like ``(1 - beta)**i`` with tiny
``beta`` and a few hundred trials stay accurate.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


# Continued fraction / bisection controls.
_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 20000
_QUANTILE_XTOL = 1e-10
_QUANTILE_MAX_ITER = 200

# Below this many factors, log C(n, k) is summed term by term.
_DIRECT_COMB_LIMIT = 64


def log_gamma(x: float) -> float:
    """Return ``ln Gamma(x)`` for ``x > 0``."""
    if not x > 0 or math.isinf(x):
        raise DomainError(f"log_gamma requires a finite x > 0, got {x!r}")
    return math.lgamma(x)


def log_binomial_coeff(n: int, k: int) -> float:
    """Return ``ln C(n, k)``.

    Small ``min(k, n - k)`` is summed factor by factor, which avoids the
    cancellation of three large ``lgamma`` values when ``n`` is large.
    """
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"need 0 <= k <= n, got n={n}, k={k}")
    j = min(k, n - k)
    if j == 0:
        return 0.0
    if j <= _DIRECT_COMB_LIMIT:
        return math.fsum(math.log((n - i) / (i + 1)) for i in range(j))
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _check_shape(a: float, b: float) -> None:
    if not (a > 0 and b > 0) or math.isinf(a) or math.isinf(b):
        raise DomainError(f"shape parameters must be finite and positive, got a={a!r}, b={b!r}")


def reg_incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``.

    This is the CDF of ``Beta(a, b)`` evaluated at ``x``.
    """
    _check_shape(a, b)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - log_beta(a, b)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        value = front * _betacf(a, b, x) / a
    else:
        value = 1.0 - front * _betacf(b, a, 1.0 - x) / b
    return min(1.0, max(0.0, value))


def _log_beta_pdf(x: float, a: float, b: float) -> float:
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - log_beta(a, b)


def beta_quantile(q: float, a: float, b: float) -> float:
    """Return ``x`` with ``I_x(a, b) = q``.

    Bisection on ``[0, 1]`` down to a bracket of width 1e-10 (at most 200
    halvings), followed by Newton steps that are only accepted while they
    stay inside the final bracket and reduce the residual.
    """
    _check_shape(a, b)
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q!r}")
    lo, hi = 0.0, 1.0
    for _ in range(_QUANTILE_MAX_ITER):
        if hi - lo <= _QUANTILE_XTOL:
            break
        mid = 0.5 * (lo + hi)
        if reg_incomplete_beta(a, b, mid) < q:
            lo = mid
        else:
            hi = mid

    x = 0.5 * (lo + hi)
    resid = reg_incomplete_beta(a, b, x) - q
    for _ in range(8):
        if resid == 0.0 or x <= 0.0 or x >= 1.0:
            break
        step = resid / math.exp(_log_beta_pdf(x, a, b))
        x_new = x - step
        if not lo <= x_new <= hi:
            break
        resid_new = reg_incomplete_beta(a, b, x_new) - q
        if abs(resid_new) >= abs(resid):
            break
        x, resid = x_new, resid_new
    return x


@lru_cache(maxsize=256)
def _log_comb_row(n: int) -> np.ndarray:
    row = np.array([log_binomial_coeff(n, i) for i in range(n + 1)])
    row.setflags(write=False)
    return row


def _logsumexp(v: np.ndarray) -> float:
    if v.size == 0:
        return -math.inf
    top = float(v.max())
    if top == -math.inf:
        return -math.inf
    return top + math.log(float(np.exp(v - top).sum()))


def _binom_sum(n: int, p: float, lo: int, hi: int) -> float:
    """``Pr[lo <= Bin(n, p) <= hi]`` by log-sum-exp over the pmf terms."""
    lo = max(lo, 0)
    hi = min(hi, n)
    if lo > hi:
        return 0.0
    if p == 0.0:
        return 1.0 if lo == 0 else 0.0
    if p == 1.0:
        return 1.0 if hi == n else 0.0
    i = np.arange(lo, hi + 1)
    terms = _log_comb_row(n)[lo : hi + 1] + i * math.log(p) + (n - i) * math.log1p(-p)
    return min(1.0, math.exp(_logsumexp(terms)))


def _check_count_args(n: int, p: float, name: str) -> None:
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {p!r}")


def binomial_tail_geq(n: int, p: float, K: int) -> float:
    """``Pr[Bin(n, p) >= K]``.

    Sums whichever side of the distribution is shorter relative to the
    mean; the returned value is accurate in absolute terms either way and
    in relative terms when it is small.
    """
    _check_count_args(n, p, "p")
    if not 0 <= K <= n:
        raise DomainError(f"need 0 <= K <= n, got n={n}, K={K}")
    if K == 0:
        return 1.0
    if K > n * p:
        return _binom_sum(n, p, K, n)
    return max(0.0, 1.0 - _binom_sum(n, p, 0, K - 1))


def binomial_cdf_leq(n: int, eps: float, M: int) -> float:
    """``Pr[Bin(n, eps) <= M]``."""
    _check_count_args(n, eps, "eps")
    if not 0 <= M <= n:
        raise DomainError(f"need 0 <= M <= n, got n={n}, M={M}")
    if M == n:
        return 1.0
    if M < n * eps:
        return _binom_sum(n, eps, 0, M)
    return max(0.0, 1.0 - _binom_sum(n, eps, M + 1, n))
