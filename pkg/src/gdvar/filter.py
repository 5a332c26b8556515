"""
Score-driven (DCS) recursion for one intraday slot.

For day ``t`` the two dynamic parameters are carried as link values
``(lam_t, v_t)``:

* WPD: ``beta = exp(lam)``, ``c = exp(v)``; the seasonal term enters ``lam``.
* GPD: ``c = exp(lam)``, ``theta = exp(v)``; the seasonal term enters ``v``.
* RPD: ``sigma = lam`` (untransformed), ``delta = exp(v)``; the seasonal term
  enters ``sigma``.

The update is

    lam_{t+1} = (A1 [+ q_{t+1}]) + B1 * lam_t + C1 * s_lam(x_t)
    v_{t+1}   = (A2 [+ q_{t+1}]) + B2 * v_t   + C2 * s_v(x_t)

where the standardized score divides the link-scale gradient by the expected
Hessian on the same scale.  ``x_t`` is scored at the state built from data up
to ``t - 1``, so the accumulated log-likelihood is the predictive one.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from numba import njit

from gdvar.distributions import (
    GAMMA_PARETO_IV,
    RAYLEIGH_PARETO_IV,
    WEIBULL_PARETO_IV,
    WPD_SHAPE_INFORMATION,
    Family,
    GdParams,
    ScoreVector,
    quantile_scalar,
    uniform_open,
)
from gdvar._special import digamma, trigamma
from gdvar.exceptions import FilterError, ParameterError

__all__ = [
    "EPS_FLOOR",
    "SIGMA_FLOOR",
    "DcsCoefficients",
    "FilterState",
    "FilterPath",
    "state_to_params",
    "params_to_state",
    "standardized_score",
    "filter_step",
    "run_filter",
    "simulate",
]

EPS_FLOOR = 1e-12
SIGMA_FLOOR = 1e-8

_SHAPE_SCALING = {"fisher": 0, "unit": 1}


@dataclass(frozen=True)
class DcsCoefficients:
    """Recursion coefficients plus the static inequality parameter."""

    A1: float
    B1: float
    C1: float
    A2: float
    B2: float
    C2: float
    alpha_static: float

    NAMES = ("A1", "B1", "C1", "A2", "B2", "C2", "alpha")

    def __post_init__(self):
        if not self.alpha_static > 0:
            raise ParameterError("alpha_static must be positive")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "DcsCoefficients":
        values = [float(v) for v in values]
        if len(values) != len(fields(cls)):
            raise ValueError("expected 7 values (A1, B1, C1, A2, B2, C2, alpha)")
        return cls(*values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.NAMES, astuple(self)))


@dataclass(frozen=True)
class FilterState:
    lam: float
    v: float


@dataclass
class FilterPath:
    """Output of :func:`run_filter`.

    ``lam[t]``, ``v[t]`` are the states used to score ``x[t]``;
    ``next_state`` is the one-step-ahead state after the final observation.
    """

    kind: Family
    alpha: float
    lam: np.ndarray
    v: np.ndarray
    score_p1: np.ndarray
    score_p2: np.ndarray
    std_score_lam: np.ndarray
    std_score_v: np.ndarray
    loglik_increments: np.ndarray
    loglik: float
    next_state: FilterState
    clamped_days: int = 0

    def __len__(self) -> int:
        return len(self.lam)

    @property
    def p1(self) -> np.ndarray:
        return self.lam.copy() if self.kind == Family.RAYLEIGH_PARETO_IV else np.exp(self.lam)

    @property
    def p2(self) -> np.ndarray:
        return np.exp(self.v)

    def params_at(self, t: int) -> GdParams:
        return state_to_params(self.kind, FilterState(self.lam[t], self.v[t]), self.alpha)

    def next_params(self) -> GdParams:
        return state_to_params(self.kind, self.next_state, self.alpha)


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


@njit(cache=True, error_model="numpy")
def _link_params(kind, lam, v):
    if kind == RAYLEIGH_PARETO_IV:
        return lam, math.exp(v)
    return math.exp(lam), math.exp(v)


@njit(cache=True, error_model="numpy")
def _eval(kind, alpha, lam, v, lx, unit_shape):
    # one observation with ln x = lx at link state (lam, v):
    # returns (log-density, d_p1, d_p2, s_lam, s_v)
    e = lx / alpha
    if e > 700.0:
        L = e + math.log1p(math.exp(-e))
        lnL = math.log(L)
    elif e < -30.0:
        L = math.exp(e)
        lnL = e - 0.5 * L
    else:
        L = math.log1p(math.exp(e))
        lnL = math.log(L)
    common = -math.log(alpha) + (1.0 / alpha - 1.0) * lx - L
    p2 = math.exp(v)
    if kind == WEIBULL_PARETO_IV:
        p1 = math.exp(lam)
        lbl = lam + lnL
        w = math.exp(p2 * lbl)  # (beta * L) ** c ~ Exp(1)
        ll = v + p2 * lam + common + (p2 - 1.0) * lnL - w
        d1 = p2 / p1 * (1.0 - w)
        d2 = 1.0 / p2 + lbl * (1.0 - w)
        s1 = (w - 1.0) / p2
        if unit_shape:
            s2 = -d2 * p2
        else:
            s2 = -d2 * p2 / WPD_SHAPE_INFORMATION
        return ll, d1, d2, s1, s2
    if kind == GAMMA_PARETO_IV:
        p1 = math.exp(lam)
        ll = -p2 * lam - math.lgamma(p2) + common - L / p1 + (p2 - 1.0) * lnL
        d1 = -p2 / p1 + L / (p1 * p1)
        d2 = -lam - digamma(p2) + lnL
        s1 = -d1 * p1 / p2
        s2 = -d2 / (p2 * trigamma(p2))
        return ll, d1, d2, s1, s2
    # Rayleigh-Pareto: sigma is carried untransformed
    p1 = lam
    r2 = (p2 * L / p1) ** 2
    ll = 2.0 * v - 2.0 * math.log(p1) + lnL + common - 0.5 * r2
    d1 = (r2 - 2.0) / p1
    d2 = (2.0 - r2) / p2
    s1 = -d1 * p1 * p1 / 4.0
    s2 = -d2 * p2 / 4.0
    return ll, d1, d2, s1, s2


@njit(cache=True, error_model="numpy")
def _advance(kind, lam, v, s1, s2, a1, a2, b1, c1, b2, c2):
    # returns (lam_next, v_next, clamped)
    lam_n = a1 + b1 * lam + c1 * s1
    v_n = a2 + b2 * v + c2 * s2
    clamped = False
    if kind == RAYLEIGH_PARETO_IV and lam_n < 1e-8:
        lam_n = 1e-8
        clamped = True
    return lam_n, v_n, clamped


@njit(cache=True, error_model="numpy")
def _state_ok(kind, lam, v):
    if not (math.isfinite(lam) and math.isfinite(v)):
        return False
    if kind == RAYLEIGH_PARETO_IV:
        return lam > 0.0 and abs(v) < 700.0
    return abs(lam) < 700.0 and abs(v) < 700.0


@njit(cache=True, error_model="numpy")
def _filter_full(kind, lx, a1, a2, b1, c1, b2, c2, alpha, lam0, v0, unit_shape):
    n = lx.shape[0]
    lam_p = np.empty(n)
    v_p = np.empty(n)
    d1_p = np.empty(n)
    d2_p = np.empty(n)
    s1_p = np.empty(n)
    s2_p = np.empty(n)
    ll_p = np.empty(n)
    lam = lam0
    v = v0
    total = 0.0
    status = -1
    clamps = 0
    for t in range(n):
        lam_p[t] = lam
        v_p[t] = v
        if not _state_ok(kind, lam, v):
            status = t
            break
        ll, d1, d2, s1, s2 = _eval(kind, alpha, lam, v, lx[t], unit_shape)
        if not (math.isfinite(ll) and math.isfinite(s1) and math.isfinite(s2)):
            status = t
            break
        ll_p[t] = ll
        d1_p[t] = d1
        d2_p[t] = d2
        s1_p[t] = s1
        s2_p[t] = s2
        total += ll
        lam, v, clamped = _advance(
            kind, lam, v, s1, s2, a1[t + 1], a2[t + 1], b1, c1, b2, c2
        )
        if clamped:
            clamps += 1
    return lam_p, v_p, d1_p, d2_p, s1_p, s2_p, ll_p, total, status, clamps, lam, v


@njit(cache=True, error_model="numpy")
def _filter_loglik(kind, lx, a1, a2, b1, c1, b2, c2, alpha, lam0, v0, unit_shape):
    # log-likelihood only; -inf on any non-finite step
    lam = lam0
    v = v0
    total = 0.0
    for t in range(lx.shape[0]):
        if not _state_ok(kind, lam, v):
            return -math.inf
        ll, d1, d2, s1, s2 = _eval(kind, alpha, lam, v, lx[t], unit_shape)
        if not (math.isfinite(ll) and math.isfinite(s1) and math.isfinite(s2)):
            return -math.inf
        total += ll
        lam, v, _ = _advance(kind, lam, v, s1, s2, a1[t + 1], a2[t + 1], b1, c1, b2, c2)
    return total


@njit(cache=True, error_model="numpy")
def _simulate_kernel(kind, u, a1, a2, b1, c1, b2, c2, alpha, lam0, v0, unit_shape):
    n = u.shape[0]
    x = np.empty(n)
    lam_p = np.empty(n)
    v_p = np.empty(n)
    lam = lam0
    v = v0
    for t in range(n):
        lam_p[t] = lam
        v_p[t] = v
        if not _state_ok(kind, lam, v):
            x[t:] = math.nan
            return x, lam_p, v_p, t
        p1, p2 = _link_params(kind, lam, v)
        xt = quantile_scalar(kind, alpha, p1, p2, u[t])
        xt = max(xt, 1e-12)
        x[t] = xt
        _, d1, d2, s1, s2 = _eval(kind, alpha, lam, v, math.log(xt), unit_shape)
        lam, v, _ = _advance(kind, lam, v, s1, s2, a1[t + 1], a2[t + 1], b1, c1, b2, c2)
    return x, lam_p, v_p, -1


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def _dynamic_kind(kind) -> Family:
    kind = Family.parse(kind)
    if kind == Family.PARETO_IV:
        raise ValueError("Pareto IV has a single parameter and no score recursion")
    return kind


def _shape_flag(shape_scaling: str) -> int:
    try:
        return _SHAPE_SCALING[shape_scaling]
    except KeyError:
        raise ValueError(f"shape_scaling must be one of {sorted(_SHAPE_SCALING)}") from None


def state_to_params(kind, state: FilterState, alpha: float) -> GdParams:
    kind = _dynamic_kind(kind)
    p1, p2 = _link_params(int(kind), state.lam, state.v)
    return GdParams(alpha, p1, p2)


def params_to_state(kind, params: GdParams) -> FilterState:
    kind = _dynamic_kind(kind)
    lam = params.p1 if kind == Family.RAYLEIGH_PARETO_IV else math.log(params.p1)
    return FilterState(lam, math.log(params.p2))


def _intercepts(kind: Family, coeffs: DcsCoefficients, seasonal: np.ndarray):
    # seasonal has length n + 1; entry t feeds the update that produces state t
    zero = np.zeros_like(seasonal)
    if kind == Family.GAMMA_PARETO_IV:
        return coeffs.A1 + zero, coeffs.A2 + seasonal
    return coeffs.A1 + seasonal, coeffs.A2 + zero


def _seasonal_track(seasonal, n: int, next_q: float) -> np.ndarray:
    track = np.zeros(n + 1)
    if seasonal is not None:
        seasonal = np.asarray(seasonal, dtype=float)
        if seasonal.shape != (n,):
            raise ValueError("seasonal must have the same length as the series")
        track[:n] = seasonal
    track[n] = next_q
    return track


def standardized_score(kind, state: FilterState, alpha: float, x: float,
                       shape_scaling: str = "fisher") -> tuple[float, float]:
    """
    Standardized scores ``(s_lam, s_v)`` at ``x``.

    ``shape_scaling="unit"`` replaces the Weibull-Pareto shape divisor by
    ``-1``; every other parameter uses its expected Hessian.
    """
    kind = _dynamic_kind(kind)
    x = max(float(x), EPS_FLOOR)
    _, _, _, s1, s2 = _eval(int(kind), alpha, state.lam, state.v, math.log(x),
                            _shape_flag(shape_scaling))
    if not (math.isfinite(s1) and math.isfinite(s2)):
        raise FilterError("non-finite standardized score", day=0)
    return s1, s2


def filter_step(kind, state: FilterState, coeffs: DcsCoefficients, seasonal_q: float,
                x: float, shape_scaling: str = "fisher"):
    """
    Score ``x`` at ``state`` and advance one day.

    ``seasonal_q`` is the seasonal factor of the day being produced.

    Returns
    -------
    next_state : FilterState
    loglik : float
        Log-density of ``x`` at the current state.
    scores : ScoreVector
        Raw (unstandardized) scores at the current state.
    """
    kind = _dynamic_kind(kind)
    x = max(float(x), EPS_FLOOR)
    k = int(kind)
    flag = _shape_flag(shape_scaling)
    if not _state_ok(k, state.lam, state.v):
        raise FilterError("state outside the representable range", day=0)
    ll, d1, d2, s1, s2 = _eval(k, coeffs.alpha_static, state.lam, state.v, math.log(x), flag)
    if not (math.isfinite(ll) and math.isfinite(s1) and math.isfinite(s2)):
        raise FilterError("non-finite score or log-density", day=0)
    a1, a2 = _intercepts(kind, coeffs, np.array([seasonal_q]))
    lam, v, _ = _advance(k, state.lam, state.v, s1, s2, a1[0], a2[0],
                         coeffs.B1, coeffs.C1, coeffs.B2, coeffs.C2)
    return FilterState(lam, v), ll, ScoreVector(d1, d2)


def run_filter(kind, series, coeffs: DcsCoefficients, seasonal=None,
               initial_state: FilterState | None = None, next_q: float = 0.0,
               shape_scaling: str = "fisher") -> FilterPath:
    """
    Run the recursion over one slot's daily observations.

    Parameters
    ----------
    kind : Family or str
    series : array_like
        Positive observations, one per day.  Values below 1e-12 are floored.
    coeffs : DcsCoefficients
    seasonal : array_like, optional
        Seasonal factor for each day; ``seasonal[t]`` enters the update that
        produces the state for day ``t`` (so ``seasonal[0]`` is unused).
    initial_state : FilterState, optional
        State for the first day.  Defaults to the link-transformed static
        maximum-likelihood fit of the family to ``series`` with alpha held at
        ``coeffs.alpha_static``.
    next_q : float
        Seasonal factor for the day after the sample, used for ``next_state``.
    shape_scaling : {"fisher", "unit"}

    Raises
    ------
    FilterError
        If a state, score or log-density becomes non-finite; ``day`` holds
        the offending index.
    """
    kind = _dynamic_kind(kind)
    x = np.maximum(np.asarray(series, dtype=float), EPS_FLOOR)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("series must be a nonempty 1-d array")
    if initial_state is None:
        from gdvar.estimation import fit_static

        initial_state = params_to_state(kind, fit_static(kind, x, alpha=coeffs.alpha_static).params)
    track = _seasonal_track(seasonal, x.size, next_q)
    a1, a2 = _intercepts(kind, coeffs, track)
    out = _filter_full(int(kind), np.log(x), a1, a2, coeffs.B1, coeffs.C1, coeffs.B2, coeffs.C2,
                       coeffs.alpha_static, float(initial_state.lam), float(initial_state.v),
                       _shape_flag(shape_scaling))
    lam, v, d1, d2, s1, s2, ll, total, status, clamps, lam_n, v_n = out
    if status >= 0:
        raise FilterError(f"score recursion became non-finite at day {status}", day=int(status))
    return FilterPath(kind, coeffs.alpha_static, lam, v, d1, d2, s1, s2, ll, float(total),
                      FilterState(float(lam_n), float(v_n)), int(clamps))


def filter_loglik(kind, log_x: np.ndarray, coeffs, seasonal_track: np.ndarray,
                  initial_state: FilterState, shape_scaling: str = "fisher") -> float:
    """Fast log-likelihood for optimizers; ``-inf`` instead of raising.

    ``log_x`` holds the logs of the (floored) observations and
    ``seasonal_track`` has length ``len(log_x) + 1``.  ``coeffs`` may be a
    7-vector.
    """
    kind = Family.parse(kind)
    if isinstance(coeffs, DcsCoefficients):
        coeffs = coeffs.as_array()
    A1, B1, C1, A2, B2, C2, alpha = coeffs
    if not alpha > 0.0:
        return -math.inf
    if kind == Family.GAMMA_PARETO_IV:
        a1 = np.full(seasonal_track.shape, A1)
        a2 = A2 + seasonal_track
    else:
        a1 = A1 + seasonal_track
        a2 = np.full(seasonal_track.shape, A2)
    return _filter_loglik(int(kind), log_x, a1, a2, B1, C1, B2, C2, alpha,
                          float(initial_state.lam), float(initial_state.v),
                          _shape_flag(shape_scaling))


def simulate(kind, coeffs: DcsCoefficients, n: int, rng_seed=None, seasonal=None,
             initial_state: FilterState | None = None, shape_scaling: str = "fisher"):
    """
    Simulate ``n`` days from a DCS model.

    The default initial state is the AR fixed point ``(A1 / (1 - B1),
    A2 / (1 - B2))``.

    Returns
    -------
    x : ndarray
        Simulated observations.
    states : tuple of ndarray
        The ``(lam, v)`` paths that generated them.
    """
    kind = _dynamic_kind(kind)
    if initial_state is None:
        initial_state = FilterState(coeffs.A1 / (1.0 - coeffs.B1), coeffs.A2 / (1.0 - coeffs.B2))
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.Generator(
        np.random.PCG64(rng_seed)
    )
    u = uniform_open(rng, n)
    track = _seasonal_track(seasonal, n, 0.0)
    a1, a2 = _intercepts(kind, coeffs, track)
    x, lam, v, status = _simulate_kernel(int(kind), u, a1, a2, coeffs.B1, coeffs.C1,
                                         coeffs.B2, coeffs.C2, coeffs.alpha_static,
                                         float(initial_state.lam), float(initial_state.v),
                                         _shape_flag(shape_scaling))
    if status >= 0:
        raise FilterError(f"simulated state left the representable range at day {status}",
                          day=int(status))
    return x, (lam, v)
