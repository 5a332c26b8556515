"""Scalar special functions used by the Gamma-Pareto IV family.

Every routine here is written against the ``math`` module only so that it
compiles under ``numba.njit`` and can be called from the filter kernels.
"""

import math

from numba import njit

EULER_GAMMA = 0.57721566490153286061

# B_{2k} for k = 1..7
_BERNOULLI = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)

_RECURRENCE_FLOOR = 10.0
_MAX_ITER = 10_000
_EPS = 1e-16
_TINY = 1e-300


@njit(cache=True, error_model="numpy")
def digamma(x):
    """Digamma function for ``x > 0``.

    Shifts the argument above 10 with ``psi(x) = psi(x + 1) - 1/x`` and then
    applies the asymptotic expansion.
    """
    if not x > 0.0:
        return math.nan
    acc = 0.0
    while x < _RECURRENCE_FLOOR:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for k in range(len(_BERNOULLI)):
        series += _BERNOULLI[k] / (2.0 * (k + 1)) * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x - series


@njit(cache=True, error_model="numpy")
def trigamma(x):
    """Trigamma function for ``x > 0``."""
    if not x > 0.0:
        return math.nan
    acc = 0.0
    while x < _RECURRENCE_FLOOR:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    power = inv2 * inv
    for k in range(len(_BERNOULLI)):
        series += _BERNOULLI[k] * power
        power *= inv2
    return acc + inv + 0.5 * inv2 + series


@njit(cache=True, error_model="numpy")
def _lower_series(a, t):
    # P(a, t) by the power series; valid for t < a + 1
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(_MAX_ITER):
        denom += 1.0
        term *= t / denom
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-t + a * math.log(t) - math.lgamma(a))


@njit(cache=True, error_model="numpy")
def _upper_fraction(a, t):
    # Q(a, t) by the modified Lentz continued fraction; valid for t >= a + 1
    b = t + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-t + a * math.log(t) - math.lgamma(a)) * h


@njit(cache=True, error_model="numpy")
def gammainc_lower(a, t):
    """Regularized lower incomplete gamma ``P(a, t) = gamma(a, t) / Gamma(a)``."""
    if not a > 0.0 or t < 0.0 or math.isnan(t):
        return math.nan
    if t == 0.0:
        return 0.0
    if math.isinf(t):
        return 1.0
    if t < a + 1.0:
        return _lower_series(a, t)
    return 1.0 - _upper_fraction(a, t)


@njit(cache=True, error_model="numpy")
def gammainc_upper(a, t):
    """Regularized upper incomplete gamma ``Q(a, t) = 1 - P(a, t)``."""
    if not a > 0.0 or t < 0.0 or math.isnan(t):
        return math.nan
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    if t < a + 1.0:
        return 1.0 - _lower_series(a, t)
    return _upper_fraction(a, t)


@njit(cache=True, error_model="numpy")
def gammainc_lower_inv(a, u):
    """Solve ``P(a, t) = u`` for ``t`` by bracketing, bisection and Newton.

    The bracket grows geometrically from a mean-based guess; bisection
    narrows it until Newton steps stay inside, which then converge to a
    probability tolerance of 1e-12.
    """
    if not (0.0 < u < 1.0) or not a > 0.0:
        return math.nan
    lo = 0.0
    hi = max(a, 1.0)
    while gammainc_lower(a, hi) < u:
        lo = hi
        hi *= 2.0
        if hi > 1e300:
            return math.nan
    # a few bisection steps so Newton starts close to the root
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        if gammainc_lower(a, mid) < u:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    lga = math.lgamma(a)
    for _ in range(200):
        if u > 0.5:
            resid = (1.0 - u) - gammainc_upper(a, t)
        else:
            resid = gammainc_lower(a, t) - u
        if abs(resid) <= 1e-12 * min(u, 1.0 - u) + 1e-300:
            return t
        if resid < 0.0:
            lo = t
        else:
            hi = t
        dens = math.exp((a - 1.0) * math.log(t) - t - lga) if t > 0.0 else 0.0
        step_ok = False
        if dens > 0.0:
            cand = t - resid / dens
            if lo < cand < hi:
                t = cand
                step_ok = True
        if not step_ok:
            t = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi:
            return t
    return t
