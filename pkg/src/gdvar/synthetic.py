"""
Synthetic intraday panels simulated from DCS models.

Used by the self-test, the demos and the end-to-end tests.  Each slot is an
independent DCS path; raw returns are ``center - y`` so that negating and
shifting by the window minimum gives back the simulated values up to that
minimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from gdvar.distributions import Family
from gdvar.filter import DcsCoefficients, simulate
from gdvar.preprocessing import PriceSeries, ReturnPanel

__all__ = ["SyntheticPanel", "default_coefficients", "simulate_panel", "session_times"]


def default_coefficients(kind, n_slots: int) -> list[DcsCoefficients]:
    """Plausible per-slot coefficients giving slot returns of about 1%.

    The standardized scores fall with large observations, so volatility
    clustering comes with negative ``C1``.
    """
    kind = Family.parse(kind)
    out = []
    for j in range(n_slots):
        tilt = 0.04 * (j - (n_slots - 1) / 2) / max(n_slots, 1)
        if kind == Family.WEIBULL_PARETO_IV:
            lam, v = 4.6 + tilt, np.log(1.6)
            out.append(DcsCoefficients((1 - 0.95) * lam, 0.95, -0.06, (1 - 0.9) * v, 0.9, -0.03, 1.0))
        elif kind == Family.GAMMA_PARETO_IV:
            lam, v = np.log(0.005) + tilt, np.log(2.0)
            out.append(DcsCoefficients((1 - 0.95) * lam, 0.95, -0.06, (1 - 0.9) * v, 0.9, -0.03, 1.0))
        elif kind == Family.RAYLEIGH_PARETO_IV:
            sigma = 0.01 * (1 + tilt)
            out.append(DcsCoefficients((1 - 0.95) * sigma, 0.95, -0.06, 0.0, 0.0, 0.0, 1.0))
        else:
            raise ValueError("plain Pareto IV has no dynamic model")
    return out


def session_times(n_slots: int, open_time: str = "09:30", minutes: int = 240) -> list[str]:
    """Evenly spaced slot closing times over a trading session."""
    start = pd.Timestamp(f"2000-01-01 {open_time}")
    step = minutes // n_slots
    return [(start + pd.Timedelta(minutes=step * (k + 1))).strftime("%H:%M:%S") for k in range(n_slots)]


@dataclass
class SyntheticPanel:
    kind: Family
    coefficients: list[DcsCoefficients]
    values: np.ndarray  # simulated positive values, days x slots
    center: float
    panel: ReturnPanel

    def prices(self, start_price: float = 100.0) -> PriceSeries:
        """Slot closes consistent with ``panel``, with a reference day in front."""
        n_days, n_slots = self.panel.values.shape
        times = session_times(n_slots)
        ref_day = self.panel.dates[0] - pd.offsets.BDay(1)
        days = pd.DatetimeIndex([ref_day]).append(self.panel.dates)
        logp = np.log(start_price) + np.concatenate(
            [np.zeros(n_slots), np.cumsum(self.panel.values.ravel())]
        )
        stamps = pd.DatetimeIndex([f"{d.date()} {t}" for d in days for t in times])
        return PriceSeries(stamps, np.exp(logp))

    def prices_frame(self, start_price: float = 100.0) -> pd.DataFrame:
        p = self.prices(start_price)
        return pd.DataFrame({"timestamp": p.timestamps.strftime("%Y-%m-%dT%H:%M:%S"), "close": p.close})


def simulate_panel(kind, n_days: int, n_slots: int = 8, seed: int = 0, coefficients=None,
                   start: str = "2015-01-05", burn_in: int = 500) -> SyntheticPanel:
    """
    Simulate independent DCS slots on a business-day calendar.

    Parameters
    ----------
    kind : Family or str
    n_days, n_slots : int
    seed : int
        Slot ``j`` uses its own child stream of ``SeedSequence(seed)``.
    coefficients : list of DcsCoefficients, optional
        Defaults to :func:`default_coefficients`.
    burn_in : int
        Discarded initial days of each path.
    """
    kind = Family.parse(kind)
    coefficients = coefficients or default_coefficients(kind, n_slots)
    if len(coefficients) != n_slots:
        raise ValueError("one coefficient set per slot is required")
    streams = np.random.SeedSequence(seed).spawn(n_slots)
    cols = []
    for coeffs, ss in zip(coefficients, streams):
        x, _ = simulate(kind, coeffs, n_days + burn_in, np.random.Generator(np.random.PCG64(ss)))
        cols.append(x[burn_in:])
    y = np.column_stack(cols)
    center = float(np.mean(y))
    dates = pd.bdate_range(start, periods=n_days)
    panel = ReturnPanel(dates, center - y, slot_labels=tuple(session_times(n_slots)))
    return SyntheticPanel(kind, list(coefficients), y, center, panel)
