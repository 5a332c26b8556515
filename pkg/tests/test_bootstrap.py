import math

import numpy as np
import pandas as pd
import pytest
from scipy import integrate, optimize

from gdvar import DcsCoefficients, GdParams
from gdvar.bootstrap import (
    DEFAULT_LEVELS,
    VarForecastSeries,
    build_grid,
    forecast_var,
    rolling_forecast,
    simulate_daily_distribution,
    worker_count,
)
from gdvar.distributions import cdf, density, quantile
from gdvar.synthetic import simulate_panel

UNIT = GdParams(1.0, 1.0, 1.0)


def test_grid_edges_and_cell_mass():
    p = GdParams(0.9, 0.8, 1.7)
    g = build_grid("gpd", p, 40)
    assert g.edges[0] == 0.0 and g.M == 40
    assert np.allclose(np.diff(cdf("gpd", p, g.edges[:-1])), 1 / 40, atol=1e-12)
    assert cdf("gpd", p, g.edges[-1]) == pytest.approx(1 - 1 / 80, abs=1e-12)
    assert np.array_equal(g.midpoints, 0.5 * (g.edges[1:] + g.edges[:-1]))
    capped = build_grid("gpd", p, 40, top_probability=0.999)
    assert cdf("gpd", p, capped.edges[-1]) == pytest.approx(0.999, abs=1e-12)
    with pytest.raises(ValueError):
        build_grid("gpd", p, 40, top_probability=0.9)
    with pytest.raises(ValueError):
        build_grid("gpd", p, 1)


def test_draws_land_in_their_cells():
    # one slot, one draw at a known uniform: the cell is the one holding the quantile
    g = build_grid("wpd", UNIT, 10)
    sums = simulate_daily_distribution([g], B=2000, rng_seed=5)
    assert set(np.unique(sums)) <= set(g.midpoints)
    # each cell is hit with probability 1/M
    counts = np.array([(sums == m).sum() for m in g.midpoints])
    assert counts.sum() == 2000
    assert np.all(np.abs(counts - 200) < 5 * math.sqrt(200))


def _sum_cdf(s):
    # P(X1 + X2 <= s) for two independent copies
    return integrate.quad(lambda x: density("wpd", UNIT, x) * cdf("wpd", UNIT, s - x), 0, s,
                          limit=200, epsabs=1e-12)[0]


def test_two_slot_convolution_oracle():
    oracle = optimize.brentq(lambda s: _sum_cdf(s) - 0.95, 1.0, 1e4, xtol=1e-10)
    fc = forecast_var([("wpd", UNIT)] * 2, [0.95], M=400, B=100_000, rng_seed=2024)
    assert abs(fc.var_by_level[0.95] / oracle - 1) < 0.01


def test_var_monotone_and_shift():
    models = [("gpd", GdParams(0.9, 0.01, 2.0))] * 8
    fc = forecast_var(models, DEFAULT_LEVELS, B=1000, rng_seed=1, keep_sample=True)
    v = [fc.var_by_level[a] for a in DEFAULT_LEVELS]
    assert all(a <= b for a, b in zip(v, v[1:]))
    shifted = forecast_var(models, DEFAULT_LEVELS, B=1000, rng_seed=1, shift=0.01)
    assert all(shifted.var_by_level[a] == pytest.approx(fc.var_by_level[a] - 0.08, abs=1e-15)
               for a in DEFAULT_LEVELS)
    assert np.quantile(fc.simulated_daily_returns, 0.95) == pytest.approx(fc.var_by_level[0.95])


def test_seeded_reproducibility():
    models = [("wpd", GdParams(1.0, 50.0, 1.4))] * 4
    a = forecast_var(models, B=500, rng_seed=99)
    b = forecast_var(models, B=500, rng_seed=99)
    c = forecast_var(models, B=500, rng_seed=100)
    assert a.var_by_level == b.var_by_level
    assert a.var_by_level != c.var_by_level


def test_continuous_sum_option():
    models = [("wpd", UNIT)] * 2
    raw = simulate_daily_distribution([build_grid("wpd", UNIT, 10)] * 2, B=5, rng_seed=3,
                                      discretize=False)
    u = np.random.Generator(np.random.PCG64(3)).random((5, 2))
    # the open-interval uniforms differ from random() by at most 2^-53
    assert np.allclose(raw, quantile("wpd", UNIT, u).sum(axis=1), rtol=1e-9)
    assert forecast_var(models, [0.9], B=50, rng_seed=1, discretize=False).var_by_level[0.9] > 0


def test_invalid_levels():
    with pytest.raises(ValueError):
        forecast_var([("wpd", UNIT)], [1.0])


def test_worker_count(monkeypatch):
    monkeypatch.delenv("GDVAR_WORKERS", raising=False)
    assert worker_count(3) == 3
    monkeypatch.setenv("GDVAR_WORKERS", "2")
    assert worker_count(8) == 2
    assert worker_count(1) == 1


@pytest.fixture(scope="module")
def small_panel():
    coeffs = [DcsCoefficients(0.02, 0.9, -0.1, 0.05, 0.8, -0.05, 1.0)] * 2
    return simulate_panel("wpd", 330, n_slots=2, seed=4, coefficients=coeffs).panel


def _roll(panel, **kw):
    kw.setdefault("workers", 1)
    return rolling_forecast(panel, "wpd", window=300, horizon=4, B=300, seasonal=False, seed=8,
                            **kw)


def test_rolling_forecast_shapes_and_reproducibility(small_panel):
    a = _roll(small_panel)
    assert a.var.shape == (4, len(DEFAULT_LEVELS))
    assert a.status == ["ok"] * 4
    assert np.all(np.diff(a.var, axis=1) >= 0)
    assert list(a.dates) == list(small_panel.dates[300:304])
    b = _roll(small_panel, workers=2)
    assert np.array_equal(a.var, b.var)


def test_rolling_forecast_uses_past_data_only(small_panel):
    a = _roll(small_panel)
    changed = small_panel.rows(0, small_panel.n_days)
    changed.values = small_panel.values.copy()
    changed.values[302:] *= 5.0
    b = _roll(changed)
    assert np.array_equal(a.var[:2], b.var[:2])
    assert not np.array_equal(a.var[2:], b.var[2:])


def test_forecast_frame_round_trip(small_panel):
    a = _roll(small_panel, refit_every=2)
    frame = a.to_frame()
    assert list(frame.columns) == ["date", "level", "var", "n_sims", "seed", "status"]
    assert len(frame) == 4 * len(DEFAULT_LEVELS)
    back = VarForecastSeries.from_frame(frame)
    assert np.array_equal(back.var, a.var, equal_nan=True) and back.levels == a.levels
    assert back.status == a.status
    assert isinstance(back.dates, pd.DatetimeIndex)
