"""
Rolling intraday VaR and backtests
==================================

A short version of the full pipeline on a synthetic 8-slot panel: each
slot gets its own DCS model, the day-ahead slot distributions are
discretized and bootstrapped into a daily distribution, and the resulting
VaR forecasts are backtested against realized daily losses.

The full-size run (1456-day windows, 244 forecasts) takes about ten
minutes on one core; set ``HORIZON`` accordingly.
"""

import os

import pandas as pd

from gdvar.backtesting import backtest
from gdvar.bootstrap import rolling_forecast
from gdvar.preprocessing import adjust_calendar_effects, calendar_flags
from gdvar.synthetic import simulate_panel

HORIZON = int(os.environ.get("HORIZON", "40"))
WINDOW = 1456

sim = simulate_panel("wpd", WINDOW + HORIZON, n_slots=8, seed=7)
panel = sim.panel
panel.flags = calendar_flags(panel.dates)  # Mondays follow a two-day closure
adjusted = adjust_calendar_effects(panel)
print(f"{panel.n_days} days x {panel.n_slots} slots, "
      f"{int((panel.flags > 0).sum())} post-closure days adjusted")

done = []
forecasts = rolling_forecast(adjusted, "wpd", window=WINDOW, horizon=HORIZON, seed=1,
                             progress=lambda k, n: done.append(k))
print("forecast status:", pd.Series(forecasts.status).value_counts().to_dict())

losses = pd.Series(-panel.daily()[WINDOW:WINDOW + HORIZON], index=forecasts.dates)
wide = pd.DataFrame(forecasts.var, index=forecasts.dates, columns=list(forecasts.levels))
print(wide.iloc[:5, [0, 5, 9]].round(4))

if HORIZON >= 30:
    report = backtest(losses, {"wpd": wide})
    cols = ["alpha", "hits", "expected", "lruc_p", "lrcc_p", "dq_p"]
    print(report.table[cols].round(3).to_string(index=False))
    print("\n".join(report.notes))
