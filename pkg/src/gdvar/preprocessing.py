"""
Intraday return panels and the adjustments applied before fitting.

The pipeline is::

    prices -> build_return_panel -> adjust_calendar_effects -> negate_and_shift

``seasonal_profile`` extracts the deterministic 366-day component used as
``q_t`` in the recursions, and ``adjacency_correlation_report`` summarizes
how strongly neighbouring slots co-move.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from gdvar.exceptions import IngestionError

__all__ = [
    "FREQUENCY_PRESETS",
    "CalendarFlag",
    "PriceSeries",
    "ReturnPanel",
    "IntradayReturnPanel",
    "SeasonalProfile",
    "AdjacencyReport",
    "read_prices_csv",
    "read_calendar_csv",
    "calendar_flags",
    "build_return_panel",
    "negate_and_shift",
    "adjust_calendar_effects",
    "cycle_position",
    "seasonal_profile",
    "adjacency_correlation_report",
]

#: slots per trading day of a four-hour session
FREQUENCY_PRESETS = {"20min": 12, "30min": 8, "40min": 6}

CYCLE_LENGTH = 366


class CalendarFlag(IntEnum):
    NORMAL = 0
    POST_WEEKEND = 1
    POST_VACATION = 2


@dataclass(frozen=True)
class PriceSeries:
    timestamps: pd.DatetimeIndex
    close: np.ndarray

    def __post_init__(self):
        if len(self.timestamps) != len(self.close):
            raise IngestionError("timestamps and close prices differ in length")
        if len(self.timestamps) and not self.timestamps.is_monotonic_increasing:
            raise IngestionError("timestamps must be strictly increasing")
        if self.timestamps.has_duplicates:
            bad = self.timestamps[self.timestamps.duplicated()][0]
            raise IngestionError(f"duplicate timestamp {bad.isoformat()}")
        if np.any(~(np.asarray(self.close) > 0)):
            raise IngestionError("close prices must be positive")


@dataclass
class ReturnPanel:
    """Raw log returns, one row per trading day and one column per slot."""

    dates: pd.DatetimeIndex
    values: np.ndarray
    flags: np.ndarray | None = None
    slot_labels: tuple[str, ...] = ()
    notes: list[str] = field(default_factory=list)

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def n_slots(self) -> int:
        return self.values.shape[1]

    def daily(self) -> np.ndarray:
        """Close-to-close daily log returns (the sum over slots)."""
        return self.values.sum(axis=1)

    def rows(self, start: int, stop: int) -> "ReturnPanel":
        flags = None if self.flags is None else self.flags[start:stop]
        return replace(self, dates=self.dates[start:stop], values=self.values[start:stop],
                       flags=flags, notes=list(self.notes))


@dataclass
class IntradayReturnPanel:
    """Negated returns shifted onto the positive half-line.

    ``values - shift`` recovers the negated returns exactly.
    """

    dates: pd.DatetimeIndex
    values: np.ndarray
    shift: float
    flags: np.ndarray | None = None

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def n_slots(self) -> int:
        return self.values.shape[1]

    def negated(self) -> np.ndarray:
        return self.values - self.shift


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------


def read_prices_csv(path) -> PriceSeries:
    """Read a ``timestamp,close`` CSV (ISO-8601 timestamps; extra columns ignored)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"price file not found: {path}")
    frame = pd.read_csv(path, dtype={"timestamp": str})
    missing = {"timestamp", "close"} - set(frame.columns)
    if missing:
        raise IngestionError(f"{path}: missing column(s) {sorted(missing)}")
    try:
        ts = pd.DatetimeIndex(pd.to_datetime(frame["timestamp"], format="ISO8601"))
    except (ValueError, TypeError) as exc:
        raise IngestionError(f"{path}: unparseable timestamp ({exc})") from exc
    close = pd.to_numeric(frame["close"], errors="coerce").to_numpy(dtype=float)
    if np.any(np.isnan(close)):
        row = int(np.flatnonzero(np.isnan(close))[0])
        raise IngestionError(f"{path}: non-numeric close on row {row + 2}")
    order_ok = ts.is_monotonic_increasing and not ts.has_duplicates
    if not order_ok:
        raise IngestionError(f"{path}: timestamps must be strictly increasing")
    return PriceSeries(ts, close)


def read_calendar_csv(path) -> pd.DataFrame:
    """Read a ``date,kind`` calendar with kind in {trading, weekend, holiday}."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"calendar file not found: {path}")
    frame = pd.read_csv(path, dtype=str)
    missing = {"date", "kind"} - set(frame.columns)
    if missing:
        raise IngestionError(f"{path}: missing column(s) {sorted(missing)}")
    kinds = frame["kind"].str.strip().str.lower()
    bad = sorted(set(kinds) - {"trading", "weekend", "holiday"})
    if bad:
        raise IngestionError(f"{path}: unknown calendar kind(s) {bad}")
    out = pd.DataFrame({"date": pd.to_datetime(frame["date"]).dt.normalize(), "kind": kinds})
    return out.sort_values("date").reset_index(drop=True)


def calendar_flags(trading_dates, calendar: pd.DataFrame | None = None) -> np.ndarray:
    """
    Flag the first trading day after a market closure.

    A day preceded by two consecutive non-trading days is ``POST_WEEKEND``;
    three or more is ``POST_VACATION``.  Without a calendar, the gap in
    calendar days between consecutive trading dates is used.
    """
    dates = pd.DatetimeIndex(trading_dates).normalize()
    flags = np.zeros(len(dates), dtype=np.int64)
    if calendar is None:
        gaps = np.r_[1, np.diff(dates.values).astype("timedelta64[D]").astype(int)]
        closed = gaps - 1
        closed[0] = 0
    else:
        closed = np.zeros(len(dates), dtype=int)
        kinds = calendar.set_index("date")["kind"]
        run = 0
        runs = {}
        for d, k in kinds.items():
            if k == "trading":
                runs[d] = run
                run = 0
            else:
                run += 1
        for i, d in enumerate(dates):
            closed[i] = runs.get(d, 0)
    flags[closed >= 2] = CalendarFlag.POST_WEEKEND
    flags[closed >= 3] = CalendarFlag.POST_VACATION
    return flags


def build_return_panel(prices: PriceSeries, slots_per_day: int | None = None,
                       slot_times=None) -> ReturnPanel:
    """
    Intraday log returns ``log P_tau - log P_{tau-1}``.

    The first slot of each day is measured from the previous day's last
    close, so it carries the overnight move.  The first day of the file
    only supplies that reference close.

    Parameters
    ----------
    prices : PriceSeries
        Slot-closing prices.
    slots_per_day : int, optional
        Expected number of slots; checked against the data.
    slot_times : sequence of str or datetime.time, optional
        Expected times of day of the slot closes.  Defaults to the set of
        times observed on the majority of days.

    Raises
    ------
    IngestionError
        When a day lacks a slot (the message names the date and slot), has
        an unexpected one, or the slot count disagrees with ``slots_per_day``.
    """
    ts = prices.timestamps
    frame = pd.DataFrame({"close": prices.close}, index=ts)
    day = ts.normalize()
    tod = ts.strftime("%H:%M:%S")
    if slot_times is None:
        per_day = pd.Series(tod, index=ts).groupby(day).agg(tuple)
        canonical = per_day.value_counts().index[0]
    else:
        canonical = tuple(pd.to_datetime([str(t) for t in slot_times], format="mixed")
                          .strftime("%H:%M:%S"))
    canonical = tuple(sorted(canonical))
    if slots_per_day is not None and len(canonical) != slots_per_day:
        raise IngestionError(
            f"expected {slots_per_day} slots per day, data has {len(canonical)}"
        )
    n = len(canonical)
    days = day.unique()
    logp = np.log(frame["close"].to_numpy())
    grouped = pd.Series(np.arange(len(ts)), index=ts).groupby(day)
    rows = []
    for d in days:
        idx = grouped.get_group(d).to_numpy()
        got = tuple(tod[idx])
        if got != canonical:
            missing = sorted(set(canonical) - set(got))
            extra = sorted(set(got) - set(canonical))
            if missing:
                raise IngestionError(f"{d.date()}: missing slot {missing[0]} (slot {canonical.index(missing[0]) + 1} of {n})")
            raise IngestionError(f"{d.date()}: unexpected slot time {extra[0]}")
        rows.append(logp[idx])
    if len(rows) < 2:
        raise IngestionError("need at least two trading days")
    mat = np.vstack(rows)
    prev_close = mat[:-1, -1]
    cur = mat[1:]
    returns = np.empty_like(cur)
    returns[:, 0] = cur[:, 0] - prev_close
    returns[:, 1:] = np.diff(cur, axis=1)
    return ReturnPanel(pd.DatetimeIndex(days[1:]), returns, slot_labels=canonical)


# --------------------------------------------------------------------------
# transformations
# --------------------------------------------------------------------------


def negate_and_shift(panel, rows: slice | None = None) -> IntradayReturnPanel:
    """
    Negate returns and shift them onto ``[0, inf)``.

    The shift equals ``|min(-r)|`` over ``rows`` (the whole panel by
    default) when that minimum is negative, and zero otherwise, so an
    estimation window never looks at later data.
    """
    if isinstance(panel, ReturnPanel):
        dates, raw, flags = panel.dates, panel.values, panel.flags
    else:
        raw = np.atleast_2d(np.asarray(panel, dtype=float))
        dates, flags = pd.RangeIndex(raw.shape[0]), None
    if raw.size == 0:
        raise ValueError("panel is empty")
    neg = -raw
    ref = neg if rows is None else neg[rows]
    low = float(ref.min())
    shift = -low if low < 0 else 0.0
    return IntradayReturnPanel(dates, neg + shift, shift, flags)


def adjust_calendar_effects(panel: ReturnPanel, flags=None, slots: str | list[int] = "first",
                            ddof: int = 1) -> ReturnPanel:
    """
    Reshape post-weekend and post-vacation returns to the normal-day law.

    For each adjusted slot the flagged group is standardized with its own
    mean and standard deviation and mapped back with those of the
    unflagged days.  Unflagged observations are untouched.

    Parameters
    ----------
    panel : ReturnPanel
    flags : array_like of CalendarFlag, optional
        Defaults to ``panel.flags``.
    slots : "first", "all" or list of int
        Which slot columns carry the effect.  The closure acts on the open,
        so only the first slot is adjusted by default.

    Returns
    -------
    ReturnPanel
        A copy; groups that could not be adjusted (fewer than two members
        or zero spread) are listed in ``notes`` and raise a warning.
    """
    flags = np.asarray(panel.flags if flags is None else flags)
    if flags.shape != (panel.n_days,):
        raise ValueError("one calendar flag per day is required")
    if slots == "first":
        cols = [0]
    elif slots == "all":
        cols = list(range(panel.n_slots))
    else:
        cols = list(slots)
    values = panel.values.copy()
    normal = flags == CalendarFlag.NORMAL
    notes = list(panel.notes)
    if not np.any(flags != CalendarFlag.NORMAL):
        return replace(panel, values=values, flags=flags, notes=notes)
    if normal.sum() < 2:
        raise ValueError("need at least two unaffected days per slot")
    for j in cols:
        col = values[:, j]
        mu, sd = col[normal].mean(), col[normal].std(ddof=ddof)
        for group in (CalendarFlag.POST_WEEKEND, CalendarFlag.POST_VACATION):
            mask = flags == group
            if not mask.any():
                continue
            member = col[mask]
            g_sd = member.std(ddof=ddof) if member.size >= 2 else 0.0
            if member.size < 2 or not g_sd > 0:
                msg = f"slot {j}: {group.name.lower()} adjustment skipped ({member.size} obs)"
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                notes.append(msg)
                continue
            col[mask] = (member - member.mean()) / g_sd * sd + mu
    return replace(panel, values=values, flags=flags, notes=notes)


# --------------------------------------------------------------------------
# seasonality
# --------------------------------------------------------------------------


def cycle_position(dates) -> np.ndarray:
    """Zero-based index of each date in a 366-day (leap-year) cycle."""
    dates = pd.DatetimeIndex(dates)
    doy = dates.dayofyear.to_numpy() - 1
    shift = (~dates.is_leap_year) & (dates.month > 2)
    return doy + shift.astype(int)


@dataclass(frozen=True)
class SeasonalProfile:
    """Deterministic annual component ``q`` indexed by cycle position."""

    q: np.ndarray

    def __post_init__(self):
        if self.q.shape != (CYCLE_LENGTH,) or not np.all(np.isfinite(self.q)):
            raise ValueError("a seasonal profile has 366 finite entries")

    def at(self, dates) -> np.ndarray:
        return self.q[cycle_position(dates)]

    @classmethod
    def zeros(cls) -> "SeasonalProfile":
        return cls(np.zeros(CYCLE_LENGTH))


def _centered_ma(x: np.ndarray, period: int) -> np.ndarray:
    # 2 x period moving average for even periods; NaN where the window is incomplete
    if period % 2 == 0:
        w = np.r_[0.5, np.ones(period - 1), 0.5] / period
    else:
        w = np.ones(period) / period
    half = len(w) // 2
    out = np.full(x.shape, np.nan)
    if x.size >= len(w):
        out[half: x.size - half] = np.convolve(x, w, mode="valid")
    return out


def seasonal_profile(values, dates=None, start_position: int = 0) -> SeasonalProfile:
    """
    Annual profile by moving-average detrending and averaging per calendar day.

    Parameters
    ----------
    values : array_like
        Daily observations.
    dates : array_like of datetime, optional
        Dates of ``values``.  Days with no observation (holidays, weekends,
        February 29 of common years) are filled with zero.  Without dates,
        ``values`` is taken as already laid out on the 366-day cycle.
    start_position : int
        Cycle position of ``values[0]`` when ``dates`` is omitted.

    Raises
    ------
    ValueError
        With fewer than two full cycles of history.
    """
    values = np.asarray(values, dtype=float)
    if dates is None:
        grid = values
        first = start_position % CYCLE_LENGTH
    else:
        dates = pd.DatetimeIndex(dates)
        pos = cycle_position(dates)
        years = dates.year.to_numpy()
        absolute = (years - years.min()) * CYCLE_LENGTH + pos
        first = int(absolute.min())
        grid = np.zeros(int(absolute.max()) - first + 1)
        np.add.at(grid, absolute - first, values)
        first %= CYCLE_LENGTH
    if grid.size < 2 * CYCLE_LENGTH:
        raise ValueError(
            f"need two full {CYCLE_LENGTH}-day cycles, got {grid.size} days"
        )
    detrended = grid - _centered_ma(grid, CYCLE_LENGTH)
    idx = (np.arange(grid.size) + first) % CYCLE_LENGTH
    ok = np.isfinite(detrended)
    sums = np.bincount(idx[ok], weights=detrended[ok], minlength=CYCLE_LENGTH)
    counts = np.bincount(idx[ok], minlength=CYCLE_LENGTH)
    q = sums / np.maximum(counts, 1)
    return SeasonalProfile(q - q.mean())


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AdjacencyReport:
    table: pd.DataFrame
    ratio: float


def adjacency_correlation_report(panel, level: float = 0.05) -> AdjacencyReport:
    """
    Pearson tests of zero correlation between neighbouring slots.

    Each pair ``(tau, tau + 1)`` gets ``t = r sqrt((T - 2) / (1 - r^2))``
    with a two-sided Student-t p-value; ``ratio`` is the share of pairs
    rejected at ``level``.
    """
    values = panel.values if hasattr(panel, "values") and not isinstance(panel, np.ndarray) else panel
    values = np.asarray(values, dtype=float)
    n, k = values.shape
    if n < 30:
        raise ValueError("need at least 30 days")
    rows = []
    for j in range(k - 1):
        a, b = values[:, j], values[:, j + 1]
        r = float(np.corrcoef(a, b)[0, 1]) if a.std() > 0 and b.std() > 0 else 0.0
        if abs(r) >= 1.0:
            t_stat, p = math.copysign(math.inf, r), 0.0
        else:
            t_stat = r * math.sqrt((n - 2) / (1.0 - r * r))
            p = float(2.0 * stats.t.sf(abs(t_stat), n - 2))
        rows.append({"slot": j + 1, "next_slot": j + 2, "r": r, "t": t_stat, "p_value": p})
    table = pd.DataFrame(rows)
    ratio = float((table["p_value"] < level).mean()) if len(table) else 0.0
    return AdjacencyReport(table, ratio)
