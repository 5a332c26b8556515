"""
Fast invariant checks runnable from an installed package (``gdvar selftest``).
"""

from __future__ import annotations

import math
import sys
import time

import numpy as np
from scipy import integrate

from gdvar.backtesting import lr_cc, lr_uc, mcs
from gdvar.bootstrap import build_grid, forecast_var
from gdvar.distributions import Family, GdParams, cdf, density, quantile, score
from gdvar.filter import DcsCoefficients, FilterState, run_filter
from gdvar.preprocessing import negate_and_shift

_PARAMS = {
    Family.PARETO_IV: GdParams(0.8, 1.5),
    Family.WEIBULL_PARETO_IV: GdParams(0.8, 1.5, 1.3),
    Family.GAMMA_PARETO_IV: GdParams(0.8, 1.5, 1.3),
    Family.RAYLEIGH_PARETO_IV: GdParams(0.8, 1.5, 1.3),
}


def _normalization():
    worst = 0.0
    for kind, p in _PARAMS.items():
        f = lambda t: density(kind, p, t / (1.0 - t)) / (1.0 - t) ** 2  # noqa: E731
        val, _ = integrate.quad(f, 0.0, 1.0, limit=400, epsabs=1e-12, epsrel=1e-12)
        worst = max(worst, abs(val - 1.0))
    return worst < 1e-6, f"max |integral - 1| = {worst:.2e}"


def _round_trip():
    u = np.linspace(0.001, 0.999, 101)
    worst = max(float(np.max(np.abs(cdf(k, p, quantile(k, p, u)) - u))) for k, p in _PARAMS.items())
    return worst < 1e-9, f"max |F(Q(u)) - u| = {worst:.2e}"


def _wpd_reduces_to_pareto():
    x = np.geomspace(1e-3, 1e3, 50)
    a = density(Family.WEIBULL_PARETO_IV, GdParams(0.7, 2.0, 1.0), x)
    b = density(Family.PARETO_IV, GdParams(0.7, 2.0), x)
    err = float(np.max(np.abs(a / b - 1.0)))
    return err < 1e-12, f"max relative gap = {err:.2e}"


def _score_finite_difference():
    worst = 0.0
    x = 0.7
    for kind, p in _PARAMS.items():
        if kind == Family.PARETO_IV:
            continue
        s = score(kind, p, x)
        for attr, val in (("p1", s.d_p1), ("p2", s.d_p2)):
            h = 1e-6
            up = GdParams(p.alpha, p.p1 + h * (attr == "p1"), p.p2 + h * (attr == "p2"))
            dn = GdParams(p.alpha, p.p1 - h * (attr == "p1"), p.p2 - h * (attr == "p2"))
            fd = (math.log(density(kind, up, x)) - math.log(density(kind, dn, x))) / (2 * h)
            worst = max(worst, abs(fd - val) / max(abs(val), 1e-3))
    return worst < 1e-4, f"max relative error = {worst:.2e}"


def _null_filter():
    c = DcsCoefficients(0.1, 0.5, 0.0, 0.05, 0.3, 0.0, 1.0)
    s0 = FilterState(0.2, 0.1)
    rng = np.random.default_rng(0)
    a = run_filter("wpd", rng.uniform(0.1, 2, 40), c, initial_state=s0)
    b = run_filter("wpd", rng.uniform(0.1, 2, 40), c, initial_state=s0)
    ok = np.array_equal(a.lam, b.lam) and np.array_equal(a.v, b.v)
    return ok, "C = 0 paths identical across inputs" if ok else "C = 0 paths differ"


def _seasonal_additivity():
    rng = np.random.default_rng(1)
    x = rng.uniform(0.1, 2, 60)
    q = rng.normal(0, 0.1, 60)
    s0 = FilterState(0.2, 0.1)
    c = DcsCoefficients(0.1, 0.5, 0.2, 0.05, 0.3, 0.1, 1.0)
    with_q = run_filter("wpd", x, c, q, initial_state=s0)
    lam, v = s0.lam, s0.v
    ok = with_q.lam[0] == lam
    for t in range(1, x.size):
        ct = DcsCoefficients(c.A1 + q[t], c.B1, c.C1, c.A2, c.B2, c.C2, c.alpha_static)
        prev = run_filter("wpd", x[t - 1: t], ct, initial_state=FilterState(lam, v))
        lam, v = prev.next_state.lam, prev.next_state.v
        ok &= with_q.lam[t] == lam and with_q.v[t] == v
    return bool(ok), "state-by-state identical" if ok else "paths differ"


def _grid_mass():
    g = build_grid("gpd", GdParams(0.9, 0.8, 1.7), 50)
    mass = np.diff(cdf("gpd", g.params, g.edges[:-1]))
    err = float(np.max(np.abs(mass - 1 / 50)))
    return err < 1e-9, f"max cell-mass error = {err:.2e}"


def _var_monotone():
    fc = forecast_var([("wpd", GdParams(1.0, 100.0, 1.5))] * 4, [0.9, 0.95, 0.99], B=2000, rng_seed=3)
    v = [fc.var_by_level[a] for a in (0.9, 0.95, 0.99)]
    return v[0] <= v[1] <= v[2], "VaR nondecreasing in level"


def _shift_bookkeeping():
    raw = np.array([[0.02, -0.01], [0.005, 0.0]])
    p = negate_and_shift(raw)
    ok = bool(np.allclose(p.negated(), -raw, rtol=0.0, atol=1e-15)) and p.shift == 0.02
    return ok, f"shift = {p.shift}"


def _coverage_formulas():
    h = np.zeros(250, dtype=int)
    uc = lr_uc(h, 0.05)
    exact = -2.0 * 250 * math.log(0.95)
    ok = abs(uc.statistic - exact) < 1e-9
    perfect = np.r_[np.ones(10, dtype=int), np.zeros(190, dtype=int)]
    ok &= lr_uc(perfect, 0.05).statistic < 1e-12
    ok &= lr_cc(perfect, 0.05).statistic >= lr_uc(perfect, 0.05).statistic - 1e-12
    return bool(ok), f"LRuc(no hits, n=250) = {uc.statistic:.4f}"


def _mcs_identical():
    base = np.random.default_rng(4).normal(size=(100, 1))
    res = mcs(np.hstack([base, base, base]), n_boot=200)
    return res.survivors == (0, 1, 2), f"survivors {res.survivors}"


CHECKS = [
    ("density normalization", _normalization),
    ("quantile round trip", _round_trip),
    ("WPD with c = 1 is Pareto IV", _wpd_reduces_to_pareto),
    ("scores vs finite differences", _score_finite_difference),
    ("stationary null filter", _null_filter),
    ("seasonal additivity", _seasonal_additivity),
    ("grid cell mass", _grid_mass),
    ("VaR monotone in level", _var_monotone),
    ("shift bookkeeping", _shift_bookkeeping),
    ("coverage test formulas", _coverage_formulas),
    ("MCS keeps identical models", _mcs_identical),
]


def run_selftest(stream=None) -> int:
    """Run every check, print one line each, return 0 when all pass."""
    stream = stream or sys.stdout
    failed = 0
    for name, check in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = check()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<32} {detail} ({time.perf_counter() - t0:.2f}s)",
              file=stream)
    print(f"{len(CHECKS) - failed}/{len(CHECKS)} checks passed", file=stream)
    return 0 if failed == 0 else 1
