"""Maximum-likelihood estimation of the DCS coefficients for one slot."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from gdvar.distributions import Family, GdParams, _logpdf_ufunc
from gdvar.exceptions import NotFittableError
from gdvar.filter import (
    EPS_FLOOR,
    DcsCoefficients,
    FilterPath,
    FilterState,
    _seasonal_track,
    filter_loglik,
    params_to_state,
    run_filter,
)

__all__ = [
    "N_PARAMETERS",
    "FitOptions",
    "StaticFit",
    "FittedSlotModel",
    "aic",
    "fit_static",
    "negative_log_likelihood",
    "fit_mle",
    "numeric_hessian",
]

#: A1, B1, C1, A2, B2, C2 and the static alpha
N_PARAMETERS = 7
MIN_OBSERVATIONS = 50

DEFAULT_BOUNDS = {
    "A1": (-10.0, 10.0),
    "B1": (-0.999, 0.999),
    "C1": (-5.0, 5.0),
    "A2": (-10.0, 10.0),
    "B2": (-0.999, 0.999),
    "C2": (-5.0, 5.0),
    "alpha": (0.05, 20.0),
}


@dataclass(frozen=True)
class FitOptions:
    """
    Optimizer settings.

    Attributes
    ----------
    max_iterations : int
        Nelder-Mead iteration cap for each polish.
    tolerance : float
        Relative change in the negative log-likelihood counted as converged.
    restarts : int
        Number of screened starting points that get a full polish.
    n_candidates : int
        Random starting points screened before polishing.
    bounds : dict
        Box constraints keyed by coefficient name.
    shape_scaling : {"fisher", "unit"}
        Divisor for the Weibull-Pareto shape score.
    seed : int
        Seed for the random starts.
    simplex_scale : float, optional
        Relative edge length of the first Nelder-Mead simplex.  ``None``
        keeps scipy's 5% default; small values suit warm starts.
    """

    max_iterations: int = 4000
    tolerance: float = 1e-9
    restarts: int = 2
    n_candidates: int = 24
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    shape_scaling: str = "fisher"
    seed: int = 0
    simplex_scale: float | None = None

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        for key in ("B1", "B2"):
            lo, hi = self.bounds[key]
            if lo < -0.999 or hi > 0.999:
                raise ValueError(f"{key} bounds must lie inside (-0.999, 0.999)")

    def box(self) -> list[tuple[float, float]]:
        return [tuple(self.bounds[name]) for name in DcsCoefficients.NAMES]


@dataclass(frozen=True)
class StaticFit:
    kind: Family
    params: GdParams
    loglik: float


@dataclass
class FittedSlotModel:
    """Estimated DCS model for one slot."""

    kind: Family
    coeffs: DcsCoefficients
    loglik: float
    aic: float
    converged: bool
    initial_state: FilterState
    n_obs: int
    standard_errors: dict[str, float] | None = None
    shape_scaling: str = "fisher"
    n_evaluations: int = 0
    static_params: GdParams | None = None

    def __post_init__(self):
        self.kind = Family.parse(self.kind)

    def filter(self, series, seasonal=None, next_q: float = 0.0,
               initial_state: FilterState | None = None) -> FilterPath:
        return run_filter(self.kind, series, self.coeffs, seasonal,
                          initial_state=initial_state or self.initial_state,
                          next_q=next_q, shape_scaling=self.shape_scaling)

    def to_dict(self) -> dict:
        return {
            "family": self.kind.short_name,
            "coefficients": self.coeffs.as_dict(),
            "standard_errors": self.standard_errors,
            "loglik": float(self.loglik),
            "aic": float(self.aic),
            "n_parameters": N_PARAMETERS,
            "converged": bool(self.converged),
            "initial_state": {"lam": float(self.initial_state.lam), "v": float(self.initial_state.v)},
            "n_obs": self.n_obs,
            "shape_scaling": self.shape_scaling,
            "static_params": None if self.static_params is None else {
                "alpha": float(self.static_params.alpha),
                "p1": float(self.static_params.p1),
                "p2": float(self.static_params.p2) if math.isfinite(self.static_params.p2) else None,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FittedSlotModel":
        coeffs = data["coefficients"]
        return cls(
            kind=Family.parse(data["family"]),
            coeffs=DcsCoefficients.from_array([coeffs[k] for k in DcsCoefficients.NAMES]),
            loglik=float(data["loglik"]),
            aic=float(data["aic"]),
            converged=bool(data["converged"]),
            initial_state=FilterState(data["initial_state"]["lam"], data["initial_state"]["v"]),
            n_obs=int(data["n_obs"]),
            standard_errors=data.get("standard_errors"),
            shape_scaling=data.get("shape_scaling", "fisher"),
            static_params=_params_from_dict(data.get("static_params")),
        )


def _params_from_dict(data: dict | None) -> GdParams | None:
    if not data:
        return None
    p2 = data.get("p2")
    return GdParams(float(data["alpha"]), float(data["p1"]), math.nan if p2 is None else float(p2))


def aic(k: int, loglik: float) -> float:
    """Akaike information criterion ``2k - 2 loglik``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return 2.0 * k - 2.0 * loglik


# --------------------------------------------------------------------------
# static fit (initial state)
# --------------------------------------------------------------------------


def _moment_start(kind: Family, x: np.ndarray, alpha: float = 1.0) -> tuple[float, float, float]:
    L = np.log1p(x ** (1.0 / alpha))
    lnL = np.log(L)
    if kind == Family.WEIBULL_PARETO_IV:
        c = 1.2825 / max(lnL.std(), 1e-3)
        beta = 1.0 / math.exp(lnL.mean() + 0.5772 / c)
        return alpha, beta, c
    if kind == Family.GAMMA_PARETO_IV:
        m, var = L.mean(), max(L.var(), 1e-12)
        return alpha, var / m, m * m / var
    if kind == Family.RAYLEIGH_PARETO_IV:
        return alpha, math.sqrt(0.5 * np.mean(L * L)), 1.0
    return alpha, 1.0 / L.mean(), 1.0


def fit_static(kind, series, start: GdParams | None = None, alpha: float | None = None) -> StaticFit:
    """
    Static maximum-likelihood fit of ``(alpha, p1, p2)``.

    Used to initialize the recursion.  For the Rayleigh-Pareto family only
    ``sigma / delta`` is identified, so ``delta`` is pinned at 1.  ``start``
    replaces the moment-based starting point (and skips the extra alpha
    restarts).  A given ``alpha`` is held fixed.
    """
    kind = Family.parse(kind)
    x = np.maximum(np.asarray(series, dtype=float), EPS_FLOOR)
    k = int(kind)
    if alpha is not None and not alpha > 0:
        raise ValueError("alpha must be positive")
    if start is None:
        z_start = np.log(_moment_start(kind, x, 1.0 if alpha is None else alpha))
        shifts = (0.0, -0.7, 0.7) if alpha is None else (0.0,)
    else:
        p2 = 1.0 if kind in (Family.RAYLEIGH_PARETO_IV, Family.PARETO_IV) else start.p2
        z_start = np.log([start.alpha if alpha is None else alpha, start.p1, p2])
        shifts = (0.0,)
    free = 2 if kind in (Family.RAYLEIGH_PARETO_IV, Family.PARETO_IV) else 3
    lo = 0 if alpha is None else 1
    z_fixed = z_start.copy()

    def unpack(z):
        full = z_fixed.copy()
        full[lo:free] = z
        a, p1 = math.exp(full[0]), math.exp(full[1])
        p2 = math.exp(full[2]) if free == 3 else 1.0
        return a, p1, p2

    def nll(z):
        if np.any(np.abs(z) > 50):
            return math.inf
        a, p1, p2 = unpack(z)
        value = -float(np.sum(_logpdf_ufunc(k, a, p1, p2, x)))
        return value if math.isfinite(value) else math.inf

    best = None
    for shift in shifts:
        z0 = z_start[lo:free].copy()
        if lo == 0:
            z0[0] += shift
        res = optimize.minimize(nll, z0, method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    if not math.isfinite(best.fun):
        raise NotFittableError(f"static {kind.short_name} fit failed")
    a, p1, p2 = unpack(best.x)
    return StaticFit(kind, GdParams(a, p1, p2), -float(best.fun))


def _in_box(theta, box) -> bool:
    return all(lo <= t <= hi for t, (lo, hi) in zip(theta, box))


def negative_log_likelihood(kind, coeffs, series, seasonal=None,
                            initial_state: FilterState | None = None,
                            shape_scaling: str = "fisher") -> float:
    """
    Negative predictive log-likelihood of the DCS model.

    Returns ``inf`` when the recursion fails or ``|B| >= 1`` so optimizers
    can reject the point.
    """
    kind = Family.parse(kind)
    theta = coeffs.as_array() if isinstance(coeffs, DcsCoefficients) else np.asarray(coeffs, float)
    if abs(theta[1]) >= 1.0 or abs(theta[4]) >= 1.0 or not theta[6] > 0:
        return math.inf
    x = np.maximum(np.asarray(series, dtype=float), EPS_FLOOR)
    if initial_state is None:
        initial_state = params_to_state(kind, fit_static(kind, x).params)
    track = _seasonal_track(seasonal, x.size, 0.0)
    ll = filter_loglik(kind, np.log(x), theta, track, initial_state, shape_scaling)
    return -ll if math.isfinite(ll) else math.inf


def numeric_hessian(fun, theta, rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian with steps ``rel_step * max(|theta_i|, 1)``."""
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    h = rel_step * np.maximum(np.abs(theta), 1.0)
    f0 = fun(theta)
    hess = np.empty((k, k))
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        hess[i, i] = (fun(theta + ei) - 2.0 * f0 + fun(theta - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(k)
            ej[j] = h[j]
            val = (fun(theta + ei + ej) - fun(theta + ei - ej)
                   - fun(theta - ei + ej) + fun(theta - ei - ej)) / (4.0 * h[i] * h[j])
            hess[i, j] = hess[j, i] = val
    return hess


def _standard_errors(fun, theta) -> dict[str, float] | None:
    hess = numeric_hessian(fun, theta)
    if not np.all(np.isfinite(hess)):
        return None
    try:
        np.linalg.cholesky(hess)
        cov = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        return None
    var = np.diag(cov)
    if np.any(var <= 0):
        return None
    return dict(zip(DcsCoefficients.NAMES, np.sqrt(var).tolist()))


def _candidates(static: StaticFit, lam0: float, v0: float, rng, options: FitOptions,
                start) -> list[np.ndarray]:
    alpha = static.params.alpha
    base = np.array([(1 - 0.9) * lam0, 0.9, 0.05, (1 - 0.9) * v0, 0.9, 0.05, alpha])
    cands = [base]
    if start is not None:
        cands.append(np.asarray(start.as_array() if isinstance(start, DcsCoefficients) else start,
                                dtype=float))
    for _ in range(options.n_candidates):
        b1, b2 = rng.uniform(0.3, 0.99, size=2)
        c1, c2 = rng.uniform(-0.3, 0.3, size=2)
        cands.append(np.array([(1 - b1) * lam0, b1, c1, (1 - b2) * v0, b2, c2,
                               alpha * math.exp(rng.uniform(-0.3, 0.3))]))
    box = options.box()
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return [np.clip(c, lo, hi) for c in cands]


def _simplex(theta, scale, box) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    pts = [theta]
    for i in range(theta.size):
        step = scale * max(abs(theta[i]), 0.1)
        pt = theta.copy()
        pt[i] = theta[i] + step if theta[i] + step <= box[i][1] else theta[i] - step
        pts.append(pt)
    return np.array(pts)


def fit_mle(kind, series, seasonal=None, options: FitOptions | None = None,
            initial_state: FilterState | None = None, start=None,
            static_start: GdParams | None = None) -> FittedSlotModel:
    """
    Fit ``(A1, B1, C1, A2, B2, C2, alpha)`` by maximum likelihood.

    Random starting points around the static fit are screened by their
    likelihood, the best ``options.restarts`` are polished with bounded
    Nelder-Mead (restarted once from its own optimum), and the best result
    is kept.  Standard errors come from the inverse numeric Hessian and are
    reported only when it is positive definite.

    Parameters
    ----------
    kind : Family or str
    series : array_like
        At least 50 positive observations.
    seasonal : array_like, optional
        Per-day seasonal factors, see :func:`gdvar.filter.run_filter`.
    options : FitOptions, optional
    initial_state : FilterState, optional
        Overrides the static-fit warm start of the recursion.
    start : DcsCoefficients or array_like, optional
        Extra starting point, e.g. the previous window's estimate.
    static_start : GdParams, optional
        Starting point for the static warm-start fit.
    """
    kind = Family.parse(kind)
    options = options or FitOptions()
    x = np.maximum(np.asarray(series, dtype=float), EPS_FLOOR)
    if x.size < MIN_OBSERVATIONS:
        raise ValueError(f"need at least {MIN_OBSERVATIONS} observations, got {x.size}")
    static = fit_static(kind, x, start=static_start)
    if initial_state is None:
        initial_state = params_to_state(kind, static.params)
    track = _seasonal_track(seasonal, x.size, 0.0)
    log_x = np.log(x)
    box = options.box()
    evaluations = 0

    def objective(theta):
        nonlocal evaluations
        evaluations += 1
        if not _in_box(theta, box):
            return math.inf
        ll = filter_loglik(kind, log_x, theta, track, initial_state, options.shape_scaling)
        return -ll if math.isfinite(ll) else math.inf

    rng = np.random.Generator(np.random.PCG64(options.seed))
    cands = _candidates(static, initial_state.lam, initial_state.v, rng, options, start)
    scored = sorted(((objective(c), i) for i, c in enumerate(cands)), key=lambda t: t)
    finite = [(f, i) for f, i in scored if math.isfinite(f)]
    if not finite:
        raise NotFittableError(f"every starting point was rejected for {kind.short_name}")

    best_theta, best_f, converged = None, math.inf, False
    for f0, i in finite[: options.restarts]:
        theta, f = cands[i], f0
        ok = False
        for _ in range(2):
            nm_options = {"maxiter": options.max_iterations, "xatol": 1e-7,
                          "fatol": options.tolerance * max(1.0, abs(f)), "adaptive": True}
            if options.simplex_scale is not None:
                nm_options["initial_simplex"] = _simplex(theta, options.simplex_scale, box)
            res = optimize.minimize(objective, theta, method="Nelder-Mead", bounds=box,
                                    options=nm_options)
            improvement = (f - res.fun) / max(1.0, abs(f))
            if res.fun <= f:
                theta, f = res.x, float(res.fun)
            ok = bool(res.success) and improvement < options.tolerance
            if ok:
                break
        if f < best_f:
            best_theta, best_f, converged = theta, f, ok

    if not math.isfinite(best_f):
        raise NotFittableError(f"optimizer never left the rejection region for {kind.short_name}")
    coeffs = DcsCoefficients.from_array(best_theta)
    loglik = -best_f
    se = _standard_errors(objective, best_theta)
    return FittedSlotModel(
        kind=kind,
        coeffs=coeffs,
        loglik=loglik,
        aic=aic(N_PARAMETERS, loglik),
        converged=bool(converged),
        initial_state=initial_state,
        n_obs=int(x.size),
        standard_errors=se,
        shape_scaling=options.shape_scaling,
        n_evaluations=evaluations,
        static_params=static.params,
    )
