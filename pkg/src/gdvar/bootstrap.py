"""
Daily VaR by bootstrapping discretized intraday slot distributions.

Each slot's conditional law is cut into ``M`` equal-probability cells.  A
bootstrap day draws one uniform per slot, locates the cell containing the
corresponding quantile and adds up the cell midpoints; the empirical
quantiles of ``B`` such sums are the VaR forecasts.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from gdvar.distributions import (
    GENERATOR_NAME,
    Family,
    GdParams,
    _quantile_ufunc,
    quantile,
    uniform_open,
)
from gdvar.estimation import FitOptions, FittedSlotModel, fit_mle
from gdvar.exceptions import FilterError, GdVarError, NotFittableError
from gdvar.filter import FilterState, run_filter
from gdvar.preprocessing import ReturnPanel, seasonal_profile

__all__ = [
    "DEFAULT_LEVELS",
    "SlotGrid",
    "DailyVarForecast",
    "VarForecastSeries",
    "build_grid",
    "simulate_daily_distribution",
    "forecast_var",
    "rolling_forecast",
    "worker_count",
]

DEFAULT_LEVELS = tuple(round(0.90 + 0.01 * i, 2) for i in range(10))


@dataclass(frozen=True)
class SlotGrid:
    """Cell edges and midpoints of one slot's discretized distribution."""

    kind: Family
    params: GdParams
    edges: np.ndarray
    midpoints: np.ndarray

    @property
    def M(self) -> int:
        return self.midpoints.size


def build_grid(kind, params: GdParams, M: int = 100, top_probability: float | None = None) -> SlotGrid:
    """
    Equal-probability grid with ``M`` cells.

    Interior edges are the quantiles at ``j / M``.  The lower edge is 0 and
    the upper edge, infinite in principle, is capped at the quantile of
    ``top_probability`` (default ``1 - 1 / (2M)``).

    Examples
    --------
    >>> g = build_grid("wpd", GdParams(1.0, 1.0, 1.0), M=2)
    >>> g.edges, g.midpoints
    (array([0., 1., 3.]), array([0.5, 2. ]))
    """
    kind = Family.parse(kind)
    if int(M) != M or M < 2:
        raise ValueError("M must be an integer >= 2")
    M = int(M)
    top = 1.0 - 0.5 / M if top_probability is None else float(top_probability)
    if not (M - 1) / M < top < 1.0:
        raise ValueError("top_probability must lie in ((M - 1) / M, 1)")
    probs = np.r_[np.arange(1, M) / M, top]
    edges = np.empty(M + 1)
    edges[0] = 0.0
    edges[1:] = quantile(kind, params, probs)
    if not np.all(np.diff(edges) > 0):
        raise ArithmeticError("quantile grid is not strictly increasing")
    return SlotGrid(kind, params, edges, 0.5 * (edges[:-1] + edges[1:]))


def _generator(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.Generator(np.random.PCG64(rng_seed))


def simulate_daily_distribution(grids: Sequence[SlotGrid], B: int = 1000, rng_seed=None,
                                discretize: bool = True) -> np.ndarray:
    """
    Bootstrap ``B`` daily sums over the slots.

    Parameters
    ----------
    grids : sequence of SlotGrid
        One per slot, all with the same ``M``.
    B : int
        Number of bootstrap days.
    rng_seed : int, SeedSequence or Generator, optional
        Uniforms are drawn as one ``(B, N)`` block from PCG64.
    discretize : bool
        When False the raw quantiles are summed instead of cell midpoints.

    Returns
    -------
    ndarray
        Simulated daily values on the processed (shifted) scale.
    """
    if B < 1:
        raise ValueError("B must be positive")
    if not grids:
        raise ValueError("need at least one slot grid")
    if len({g.M for g in grids}) != 1:
        raise ValueError("all grids must share M")
    u = uniform_open(_generator(rng_seed), (int(B), len(grids)))
    total = np.zeros(int(B))
    for j, g in enumerate(grids):
        p = g.params
        draw = _quantile_ufunc(int(g.kind), p.alpha, p.p1, p.p2, u[:, j])
        if discretize:
            # cells are [edge_j, edge_j+1); draws beyond the capped edge go to the last cell
            cell = np.clip(np.searchsorted(g.edges, draw, side="right") - 1, 0, g.M - 1)
            total += g.midpoints[cell]
        else:
            total += draw
    return total


@dataclass
class DailyVarForecast:
    date: object
    var_by_level: dict[float, float]
    simulated_daily_returns: np.ndarray | None = None


def forecast_var(slot_models, levels=DEFAULT_LEVELS, M: int = 100, B: int = 1000,
                 shift: float = 0.0, rng_seed=None, discretize: bool = True,
                 date=None, keep_sample: bool = False,
                 top_probability: float | None = None) -> DailyVarForecast:
    """
    Daily VaR at each level from per-slot conditional distributions.

    Parameters
    ----------
    slot_models : sequence of (kind, GdParams)
        Day-``t`` distribution of every slot.
    levels : sequence of float
        Confidence levels in (0, 1).
    shift : float
        Shift added to every processed slot value; ``N * shift`` is removed
        from the simulated quantiles so VaR is reported as a daily loss.

    Notes
    -----
    Quantiles use linear interpolation between order statistics, so VaR is
    nondecreasing in the level.
    """
    levels = np.asarray(levels, dtype=float)
    if levels.size == 0 or np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("levels must lie in (0, 1)")
    grids = [build_grid(k, p, M, top_probability) for k, p in slot_models]
    sums = simulate_daily_distribution(grids, B, rng_seed, discretize)
    order = np.argsort(levels)
    q = np.empty(levels.size)
    # guard against one-ulp inversions of the interpolated quantiles
    q[order] = np.maximum.accumulate(np.quantile(sums, levels[order]))
    q -= len(grids) * shift
    return DailyVarForecast(
        date,
        {float(a): float(v) for a, v in zip(levels, q)},
        sums - len(grids) * shift if keep_sample else None,
    )


# --------------------------------------------------------------------------
# rolling scheme
# --------------------------------------------------------------------------


@dataclass
class VarForecastSeries:
    """Dated daily VaR forecasts on the loss scale; failed days hold NaN."""

    dates: pd.DatetimeIndex
    levels: tuple[float, ...]
    var: np.ndarray
    status: list[str]
    n_sims: int
    seed: int
    family: str = ""
    generator: str = GENERATOR_NAME
    notes: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.dates)

    def to_frame(self) -> pd.DataFrame:
        """Long format, one row per (date, level)."""
        n, k = self.var.shape
        return pd.DataFrame({
            "date": np.repeat(self.dates.strftime("%Y-%m-%d"), k),
            "level": np.tile(np.asarray(self.levels), n),
            "var": self.var.ravel(),
            "n_sims": self.n_sims,
            "seed": self.seed,
            "status": np.repeat(self.status, k),
        })

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "VarForecastSeries":
        levels = tuple(sorted(float(a) for a in frame["level"].unique()))
        wide = frame.pivot(index="date", columns="level", values="var").sort_index()
        status = frame.groupby("date")["status"].first().reindex(wide.index)
        return cls(
            pd.DatetimeIndex(pd.to_datetime(wide.index)),
            levels,
            wide[list(levels)].to_numpy(dtype=float),
            [str(s) for s in status],
            int(frame["n_sims"].iloc[0]),
            int(frame["seed"].iloc[0]),
        )


def worker_count(requested: int | None = None) -> int:
    """Worker processes: ``requested`` (default the CPU count) capped by ``GDVAR_WORKERS``."""
    n = int(requested) if requested else (os.cpu_count() or 1)
    env = os.environ.get("GDVAR_WORKERS", "").strip()
    if env:
        n = min(n, int(env))
    return max(1, n)


def _warm_options(base: FitOptions) -> FitOptions:
    return FitOptions(
        max_iterations=base.max_iterations,
        tolerance=base.tolerance,
        restarts=1,
        n_candidates=0,
        bounds=base.bounds,
        shape_scaling=base.shape_scaling,
        seed=base.seed,
        simplex_scale=0.02,
    )


@dataclass
class _SlotJob:
    kind: Family
    slot: int
    windows: list  # (start, stop) row ranges
    losses: np.ndarray  # negated returns for this slot, all days
    shifts: np.ndarray
    seasonal_tracks: list  # per window (q_window, q_next) or None
    options: FitOptions
    refit_every: int
    warm_start: bool
    frozen: FittedSlotModel | None


def _run_slot(job: _SlotJob):
    """Day-ahead parameters for one slot across all forecast days."""
    out, fails = [], []
    model = job.frozen
    prev_path, prev_start = None, 0
    for i, (start, stop) in enumerate(job.windows):
        x = job.losses[start:stop] + job.shifts[i]
        q_win, q_next = job.seasonal_tracks[i] if job.seasonal_tracks[i] is not None else (None, 0.0)
        try:
            refit = job.frozen is None and (model is None or i % job.refit_every == 0)
            path = None
            if not refit:
                # held coefficients: start from the state this model filtered for the
                # window's first day, or from its own initial state
                lag = start - prev_start
                if prev_path is not None and 0 <= lag < len(prev_path.lam):
                    state = FilterState(float(prev_path.lam[lag]), float(prev_path.v[lag]))
                else:
                    state = model.initial_state
                try:
                    path = run_filter(job.kind, x, model.coeffs, q_win, initial_state=state,
                                      next_q=q_next, shape_scaling=model.shape_scaling)
                except FilterError:
                    if job.frozen is not None:
                        raise
                    # held coefficients no longer filter this window: re-estimate
                    refit = True
            if refit:
                warm = job.warm_start and model is not None
                try:
                    model = fit_mle(
                        job.kind, x, q_win,
                        options=_warm_options(job.options) if warm else job.options,
                        start=model.coeffs if warm else None,
                        static_start=model.static_params if warm else None,
                    )
                except NotFittableError:
                    if not warm:
                        raise
                    # the previous optimum can be infeasible for the new window
                    model = fit_mle(job.kind, x, q_win, options=job.options)
                path = run_filter(job.kind, x, model.coeffs, q_win, initial_state=model.initial_state,
                                  next_q=q_next, shape_scaling=model.shape_scaling)
            prev_path, prev_start = path, start
            params = path.next_params()
            params.validate(job.kind)
            if not all(math.isfinite(v) for v in (params.alpha, params.p1, params.p2)):
                raise FilterError("non-finite forecast parameters", day=stop - start)
            out.append(params)
            fails.append("")
        except (GdVarError, ValueError, ArithmeticError) as exc:
            out.append(None)
            fails.append(f"slot {job.slot + 1}: {type(exc).__name__}: {exc}")
            prev_path = None
            if job.frozen is None:
                model = None
    return out, fails


def rolling_forecast(panel: ReturnPanel, kind, window: int = 1456, horizon: int | None = None,
                     levels=DEFAULT_LEVELS, M: int = 100, B: int = 1000, seed: int = 0,
                     refit_every: int = 1, fit_options: FitOptions | None = None,
                     discretize: bool = True, seasonal: bool = True,
                     workers: int | None = None, warm_start: bool = True,
                     models: Sequence[FittedSlotModel] | None = None,
                     top_probability: float | None = None, start: int | None = None,
                     progress=None) -> VarForecastSeries:
    """
    Rolling-window daily VaR forecasts.

    For forecast day ``t`` every slot model is estimated on days
    ``t - window .. t - 1`` and its recursion is advanced one step to give
    the day-``t`` distribution, which feeds :func:`forecast_var`.

    Parameters
    ----------
    panel : ReturnPanel
        Raw (calendar-adjusted) intraday returns.  Negation, the window's
        shift and the seasonal profile are computed inside each window, so
        no forecast uses data from day ``t`` or later.
    kind : Family or str
    window, horizon : int
        Estimation window ``s`` and number of forecasts ``n``.  ``horizon``
        defaults to all remaining days.
    refit_every : int
        Re-estimate the coefficients every this many days; in between the
        last coefficients are re-filtered over the current window, starting
        from the state they produced for its first day.  A window they can
        no longer filter triggers a re-estimation.
    warm_start : bool
        Start each re-estimation from the previous window's optimum after a
        full multistart on the first window.
    models : sequence of FittedSlotModel, optional
        Frozen per-slot coefficients; no estimation is done.
    workers : int, optional
        Slot models are estimated in this many processes (default from
        ``GDVAR_WORKERS``).
    start : int, optional
        Row of the first forecast day (default ``window``).

    Returns
    -------
    VarForecastSeries
        Days where any slot failed carry NaN and ``status == "failed"``.
    """
    kind = Family.parse(kind)
    if refit_every < 1:
        raise ValueError("refit_every must be >= 1")
    first = window if start is None else int(start)
    if first < window:
        raise ValueError("the first forecast day needs a full window of history")
    if horizon is None:
        horizon = panel.n_days - first
    if horizon < 1 or first + horizon > panel.n_days:
        raise ValueError(
            f"panel has {panel.n_days} days; window {window} + horizon {horizon} does not fit"
        )
    if models is not None and len(models) != panel.n_slots:
        raise ValueError("one frozen model per slot is required")
    levels = tuple(sorted(float(a) for a in levels))
    options = fit_options or FitOptions()

    neg = -panel.values
    days = range(first, first + horizon)
    windows = [(t - window, t) for t in days]
    shifts = np.array([max(0.0, -float(neg[a:b].min())) for a, b in windows])
    tracks = []
    for a, b in windows:
        if not seasonal:
            tracks.append(None)
            continue
        prof = seasonal_profile(neg[a:b].sum(axis=1), panel.dates[a:b])
        tracks.append((prof.at(panel.dates[a:b]), float(prof.at(panel.dates[b:b + 1])[0])))

    jobs = [
        _SlotJob(kind, j, windows, neg[:, j], shifts, tracks, options, refit_every,
                 warm_start, None if models is None else models[j])
        for j in range(panel.n_slots)
    ]
    n_workers = min(worker_count(workers), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            results = list(pool.map(_run_slot, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_run_slot(job))
            if progress is not None:
                progress(job.slot + 1, len(jobs))

    root = np.random.SeedSequence(seed)
    day_seeds = root.spawn(horizon)
    var = np.full((horizon, len(levels)), np.nan)
    status, failures = [], {}
    for i in range(horizon):
        params = [r[0][i] for r in results]
        errs = [r[1][i] for r in results if r[1][i]]
        if errs:
            status.append("failed")
            failures[str(panel.dates[first + i].date())] = errs
            continue
        try:
            fc = forecast_var([(kind, p) for p in params], levels, M, B, shifts[i],
                              np.random.Generator(np.random.PCG64(day_seeds[i])), discretize,
                              top_probability=top_probability)
        except ArithmeticError as exc:
            status.append("failed")
            failures[str(panel.dates[first + i].date())] = [f"VaR: {exc}"]
            continue
        var[i] = [fc.var_by_level[a] for a in levels]
        status.append("ok")
    return VarForecastSeries(
        pd.DatetimeIndex(panel.dates[first: first + horizon]), levels, var, status, int(B),
        int(seed), kind.short_name,
        notes={"failures": failures, "window": window, "refit_every": refit_every,
               "M": M, "discretize": discretize, "seasonal": seasonal},
    )
