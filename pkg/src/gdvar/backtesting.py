"""
Backtests for daily VaR forecasts.

Coverage tests take a 0/1 hit sequence where a hit is a loss strictly above
the VaR.  ``p`` is always the exceedance probability, i.e. ``1 - level``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import special, stats

__all__ = [
    "MIN_HITS",
    "TestResult",
    "MCSResult",
    "BacktestReport",
    "hit_sequence",
    "lr_uc",
    "lr_cc",
    "dq_test",
    "lm_score_test",
    "mcs",
    "var_loss",
    "backtest",
]

MIN_HITS = 30


@dataclass(frozen=True)
class TestResult:
    """Test statistic and p-value; unpacks as ``(statistic, p_value)``."""

    statistic: float
    p_value: float
    dof: int = 1
    note: str = ""

    def __iter__(self):
        yield self.statistic
        yield self.p_value


def _hits(hits) -> np.ndarray:
    h = np.asarray(hits)
    if h.ndim != 1:
        raise ValueError("hits must be one-dimensional")
    if h.size < MIN_HITS:
        raise ValueError(f"need at least {MIN_HITS} observations, got {h.size}")
    if not np.all((h == 0) | (h == 1)):
        raise ValueError("hits must be 0 or 1")
    return h.astype(np.int64)


def _check_p(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError("exceedance probability must lie in (0, 1)")
    return float(p)


def hit_sequence(losses, var) -> np.ndarray:
    """1 where the realized loss exceeds the VaR forecast."""
    losses, var = np.asarray(losses, dtype=float), np.asarray(var, dtype=float)
    if losses.shape != var.shape:
        raise ValueError("losses and VaR series are not aligned")
    return (losses > var).astype(np.int64)


def _chi2_sf(x: float, dof: int) -> float:
    return float(min(1.0, max(0.0, stats.chi2.sf(x, dof))))


def _bernoulli_ll(k: int, n: int, p: float) -> float:
    # k successes out of n with the convention 0 * ln 0 = 0
    return float(special.xlogy(k, p) + special.xlog1py(n - k, -p))


def lr_uc(hits, p: float) -> TestResult:
    """
    Unconditional coverage likelihood ratio (Kupiec).

    ``LR = -2 [l(p) - l(x / n)]`` for ``x`` hits in ``n`` days, compared to
    a chi-square with one degree of freedom.
    """
    h, p = _hits(hits), _check_p(p)
    n, x = h.size, int(h.sum())
    lr = -2.0 * (_bernoulli_ll(x, n, p) - _bernoulli_ll(x, n, x / n))
    lr = max(lr, 0.0)
    return TestResult(lr, _chi2_sf(lr, 1), 1)


def _transition_counts(h: np.ndarray) -> tuple[int, int, int, int]:
    prev, cur = h[:-1], h[1:]
    n01 = int(np.sum((prev == 0) & (cur == 1)))
    n00 = int(np.sum((prev == 0) & (cur == 0)))
    n11 = int(np.sum((prev == 1) & (cur == 1)))
    n10 = int(np.sum((prev == 1) & (cur == 0)))
    return n00, n01, n10, n11


def lr_independence(hits) -> TestResult:
    """First-order Markov independence likelihood ratio (chi-square, 1 dof)."""
    h = _hits(hits)
    n00, n01, n10, n11 = _transition_counts(h)
    pi = (n01 + n11) / (n00 + n01 + n10 + n11)
    pi0 = n01 / (n00 + n01) if n00 + n01 else 0.0
    pi1 = n11 / (n10 + n11) if n10 + n11 else 0.0
    restricted = _bernoulli_ll(n01 + n11, n00 + n01 + n10 + n11, pi)
    free = _bernoulli_ll(n01, n00 + n01, pi0) + _bernoulli_ll(n11, n10 + n11, pi1)
    lr = max(-2.0 * (restricted - free), 0.0)
    return TestResult(lr, _chi2_sf(lr, 1), 1)


def lr_cc(hits, p: float) -> TestResult:
    """
    Conditional coverage likelihood ratio (Christoffersen).

    The sum of the unconditional coverage and the first-order independence
    statistics, compared to a chi-square with two degrees of freedom.
    """
    uc = lr_uc(hits, p)
    ind = lr_independence(hits)
    lr = uc.statistic + ind.statistic
    return TestResult(lr, _chi2_sf(lr, 2), 2)


def _projection_stat(y: np.ndarray, X: np.ndarray) -> tuple[float, int]:
    # y'X (X'X)^+ X'y, evaluated on the column space of X
    rank = int(np.linalg.matrix_rank(X))
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ coef
    return float(fitted @ fitted), rank


def dq_test(hits, var_series, p: float, lags: int = 4) -> TestResult:
    """
    Dynamic quantile test (Engle and Manganelli).

    The demeaned hits ``H_t = hit_t - p`` are regressed on a constant,
    ``H_{t-1}, ..., H_{t-lags}`` and the VaR forecast for day ``t``.  The
    statistic ``H'X (X'X)^{-1} X'H / (p (1 - p))`` is chi-square with
    ``lags + 2`` degrees of freedom.

    Notes
    -----
    A rank-deficient design (for example a constant VaR series) is handled
    on its column space and the degrees of freedom drop to the rank; the
    ``note`` field says so.
    """
    h, p = _hits(hits), _check_p(p)
    var_series = np.asarray(var_series, dtype=float)
    if var_series.shape != h.shape:
        raise ValueError("hits and VaR series are not aligned")
    if lags < 0:
        raise ValueError("lags must be nonnegative")
    n = h.size
    if n <= lags + 10:
        raise ValueError(f"need more than {lags + 10} observations")
    H = h - p
    y = H[lags:]
    cols = [np.ones(n - lags)]
    cols += [H[lags - k: n - k] for k in range(1, lags + 1)]
    cols.append(var_series[lags:])
    X = np.column_stack(cols)
    quad, rank = _projection_stat(y, X)
    stat = quad / (p * (1.0 - p))
    note = "" if rank == X.shape[1] else f"rank-deficient design: rank {rank} of {X.shape[1]}"
    return TestResult(stat, _chi2_sf(stat, rank), rank, note)


def lm_score_test(scores, lags: int = 5) -> float:
    """
    Breusch-Godfrey test for autocorrelation of a score series.

    ``n R^2`` from the regression of the series on a constant and its own
    ``lags`` lags, chi-square with ``lags`` degrees of freedom.  Returns the
    p-value; a constant series gives 1.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size <= lags + 10:
        raise ValueError(f"need a 1-d series longer than {lags + 10}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if np.ptp(s) == 0.0:
        return 1.0
    n = s.size
    y = s[lags:]
    X = np.column_stack([np.ones(n - lags)] + [s[lags - k: n - k] for k in range(1, lags + 1)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0.0:
        return 1.0
    r2 = max(0.0, 1.0 - float(resid @ resid) / tss)
    return _chi2_sf(y.size * r2, lags)


def var_loss(losses, var_series, level: float) -> np.ndarray:
    """
    Quantile (tick) loss ``(level - 1{loss <= VaR}) (loss - VaR)``.

    ``losses`` are realized losses, the scale on which the VaR is the
    ``level`` quantile.  Expected tick loss is minimized by the true
    quantile.
    """
    r = np.asarray(losses, dtype=float)
    v = np.asarray(var_series, dtype=float)
    if r.shape != v.shape:
        raise ValueError("losses and VaR series are not aligned")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    u = r - v
    return (level - (u <= 0.0)) * u


# --------------------------------------------------------------------------
# model confidence set
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MCSResult:
    """
    Outcome of the model confidence set procedure.

    Attributes
    ----------
    survivors : tuple of int
        Column indices of the models in the set.
    pvalues : ndarray
        MCS p-value of each model.
    ranks : ndarray
        1 is best; survivors are ordered by average loss, eliminated models
        by reverse elimination order.
    eliminated : tuple of int
        Elimination order over the full sequence of tests.
    statistics, step_pvalues : tuple of float
        Test statistic and bootstrap p-value at each elimination step.
    """

    survivors: tuple[int, ...]
    pvalues: np.ndarray
    ranks: np.ndarray
    eliminated: tuple[int, ...]
    statistics: tuple[float, ...]
    step_pvalues: tuple[float, ...]
    names: tuple[str, ...] = ()


def _block_indices(n: int, block_len: int, n_boot: int, rng) -> np.ndarray:
    n_blocks = -(-n // block_len)
    starts = rng.integers(0, n - block_len + 1, size=(n_boot, n_blocks))
    idx = (starts[:, :, None] + np.arange(block_len)).reshape(n_boot, -1)
    return idx[:, :n]


def mcs(loss_matrix, level: float = 0.15, block_len: int | None = None, n_boot: int = 5000,
        seed: int = 0, statistic: str = "range", names: Sequence[str] | None = None) -> MCSResult:
    """
    Model confidence set for equal predictive ability.

    Parameters
    ----------
    loss_matrix : array_like, shape (n, m)
        Per-day loss of each model.
    level : float
        Models with an MCS p-value below ``level`` are excluded.
    block_len : int, optional
        Moving-block length, by default ``ceil(n ** (1/3))``.
    n_boot : int
        Bootstrap replications, shared by every elimination step.
    statistic : {"range", "semi-quadratic"}
        ``max |t_ij|`` or ``sum_{i<j} t_ij^2`` over the pairwise studentized
        mean loss differentials.  The worst model is the one with the
        largest ``max_j t_ij`` in either case.

    Examples
    --------
    >>> rng = np.random.default_rng(0)
    >>> base = rng.normal(size=(200, 1))
    >>> mcs(np.hstack([base, base]), n_boot=200).survivors
    (0, 1)
    """
    L = np.asarray(loss_matrix, dtype=float)
    if L.ndim != 2 or L.shape[1] < 2:
        raise ValueError("need an (n, m) loss matrix with m >= 2")
    n, m = L.shape
    if n < 50:
        raise ValueError("need at least 50 days")
    if not np.all(np.isfinite(L)):
        raise ValueError("losses must be finite")
    if statistic not in ("range", "semi-quadratic"):
        raise ValueError("statistic must be 'range' or 'semi-quadratic'")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    block_len = int(block_len or math.ceil(n ** (1.0 / 3.0)))
    if not 1 <= block_len <= n:
        raise ValueError("block_len must lie in [1, n]")

    rng = np.random.Generator(np.random.PCG64(seed))
    idx = _block_indices(n, block_len, int(n_boot), rng)
    mean = L.mean(axis=0)
    # bootstrap means of each column; pairwise differentials follow linearly
    boot = np.stack([L[row].mean(axis=0) for row in idx])

    alive = list(range(m))
    eliminated, stats_seq, p_seq = [], [], []
    pvals = np.ones(m)
    running = 0.0
    while len(alive) > 1:
        a = np.array(alive)
        d = mean[a][:, None] - mean[a][None, :]
        db = boot[:, a][:, :, None] - boot[:, a][:, None, :]
        centered = db - d
        var = np.mean(centered**2, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(var > 0, d / np.sqrt(var), np.where(d == 0, 0.0, np.sign(d) * np.inf))
            tb = np.where(var > 0, centered / np.sqrt(var), 0.0)
        iu = np.triu_indices(len(a), 1)
        if statistic == "range":
            T = float(np.max(np.abs(t[iu])))
            Tb = np.max(np.abs(tb[:, iu[0], iu[1]]), axis=1)
        else:
            T = float(np.sum(t[iu] ** 2))
            Tb = np.sum(tb[:, iu[0], iu[1]] ** 2, axis=1)
        p = 1.0 if T == 0.0 else float(np.mean(Tb >= T))
        worst = int(a[np.argmax(np.max(t, axis=1))])
        running = max(running, p)
        pvals[worst] = running
        eliminated.append(worst)
        stats_seq.append(T)
        p_seq.append(p)
        alive.remove(worst)
    pvals[alive[0]] = 1.0

    survivors = tuple(sorted(i for i in range(m) if pvals[i] >= level))
    ranks = np.empty(m, dtype=np.int64)
    order = sorted(survivors, key=lambda i: (mean[i], i))
    out = [i for i in reversed(eliminated + alive) if i not in survivors]
    for r, i in enumerate(order + out, start=1):
        ranks[i] = r
    return MCSResult(survivors, pvals, ranks, tuple(eliminated), tuple(stats_seq),
                     tuple(p_seq), tuple(names) if names is not None else ())


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class BacktestReport:
    """Per (model, level) coverage statistics plus MCS ranks and LM p-values."""

    table: pd.DataFrame
    lm: pd.DataFrame = field(default_factory=pd.DataFrame)
    notes: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        self.table.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")

    def to_dict(self) -> dict:
        def clean(records):
            return [{k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                     for k, v in r.items()} for r in records]

        return {
            "meta": self.meta,
            "results": clean(self.table.to_dict(orient="records")),
            "lm": clean(self.lm.to_dict(orient="records")) if len(self.lm) else [],
            "notes": self.notes,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def backtest(losses: pd.Series, forecasts: Mapping[str, pd.DataFrame], levels=None,
             dq_lags: int = 4, mcs_level: float = 0.15, mcs_boot: int = 5000,
             mcs_block: int | None = None, seed: int = 0, scores=None,
             lm_lags: int = 5) -> BacktestReport:
    """
    Backtest one or more VaR models against realized daily losses.

    Parameters
    ----------
    losses : Series
        Realized daily losses indexed by date.
    forecasts : mapping of str to DataFrame
        Per model, a frame indexed by date with one VaR column per level.
        NaN entries (failed forecast days) are dropped.
    scores : mapping of str to DataFrame, optional
        Per model, standardized score series (one column per slot) for the
        LM autocorrelation test.

    Raises
    ------
    ValueError
        When a model's dates are not all present in ``losses``; the message
        lists the first offending dates.
    """
    names = list(forecasts)
    if not names:
        raise ValueError("need at least one model")
    if levels is None:
        levels = sorted(set().union(*(set(f.columns) for f in forecasts.values())))
    notes: list[str] = []
    for name in names:
        missing = forecasts[name].index.difference(losses.index)
        if len(missing):
            shown = ", ".join(str(pd.Timestamp(d).date()) for d in missing[:5])
            raise ValueError(f"{name}: no realized loss for {len(missing)} date(s): {shown}")
    rows = []
    for level in levels:
        p = 1.0 - float(level)
        for name in names:
            col = forecasts[name][level].dropna()
            r = losses.reindex(col.index).to_numpy(dtype=float)
            v = col.to_numpy(dtype=float)
            hits = hit_sequence(r, v)
            uc, cc, dq = lr_uc(hits, p), lr_cc(hits, p), dq_test(hits, v, p, dq_lags)
            if dq.note:
                notes.append(f"{name} at {level:g}: DQ {dq.note}")
            rows.append({
                "model": name, "alpha": float(level), "n": int(hits.size),
                "hits": int(hits.sum()), "expected": p * hits.size,
                "lruc_stat": uc.statistic, "lruc_p": uc.p_value,
                "lrcc_stat": cc.statistic, "lrcc_p": cc.p_value,
                "dq_stat": dq.statistic, "dq_p": dq.p_value, "dq_dof": dq.dof,
                "mcs_rank": np.nan, "mcs_pvalue": np.nan,
            })
    table = pd.DataFrame(rows)
    if len(names) < 2:
        notes.append("MCS skipped: fewer than two models")
    else:
        for level in levels:
            frame = pd.concat({n: forecasts[n][level] for n in names}, axis=1).dropna()
            r = losses.reindex(frame.index).to_numpy(dtype=float)
            loss_mat = np.column_stack([var_loss(r, frame[n].to_numpy(), float(level)) for n in names])
            res = mcs(loss_mat, mcs_level, mcs_block, mcs_boot, seed, names=names)
            for i, name in enumerate(names):
                sel = (table["model"] == name) & (table["alpha"] == float(level))
                table.loc[sel, "mcs_rank"] = int(res.ranks[i])
                table.loc[sel, "mcs_pvalue"] = float(res.pvalues[i])
    lm_rows = []
    for name, frame in (scores or {}).items():
        for col in frame.columns:
            lm_rows.append({"model": name, "slot": str(col),
                            "lm_p": lm_score_test(frame[col].to_numpy(), lm_lags)})
    return BacktestReport(table, pd.DataFrame(lm_rows), notes,
                          {"levels": [float(a) for a in levels], "dq_lags": dq_lags,
                           "mcs_level": mcs_level, "mcs_boot": mcs_boot, "seed": seed})
