"""
Command-line front end.

::

    gdvar fit      --config run.cfg
    gdvar forecast --config run.cfg [--family gpd] [--levels 0.95,0.99]
    gdvar backtest --config run.cfg
    gdvar selftest

The configuration is a ``key = value`` file; relative paths are resolved
against its directory and command-line flags override it.  Exit status is
0 on success, 2 when some slot fits did not converge or some forecast days
failed, and 1 on errors, which are also written to ``error.json`` in the
output directory.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from gdvar import __version__
from gdvar.backtesting import backtest
from gdvar.bootstrap import DEFAULT_LEVELS, rolling_forecast, worker_count
from gdvar.distributions import GENERATOR_NAME, Family
from gdvar.estimation import FitOptions, FittedSlotModel, fit_mle
from gdvar.preprocessing import (
    FREQUENCY_PRESETS,
    ReturnPanel,
    adjust_calendar_effects,
    build_return_panel,
    calendar_flags,
    negate_and_shift,
    read_calendar_csv,
    read_prices_csv,
    seasonal_profile,
)

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2

_PATH_KEYS = ("prices", "calendar", "archive", "returns", "out")


@dataclass
class RunConfig:
    prices: str = ""
    calendar: str = ""
    family: str = "wpd"
    frequency: str = ""
    window: int = 1456
    horizon: int = 0
    levels: tuple[float, ...] = DEFAULT_LEVELS
    M: int = 100
    B: int = 1000
    seed: int = 0
    refit_every: int = 1
    discretize: bool = True
    seasonal: bool = True
    calendar_adjust: bool = True
    shape_scaling: str = "fisher"
    workers: int = 0
    archive: str = ""
    forecasts: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)
    returns: str = ""
    dq_lags: int = 4
    mcs_level: float = 0.15
    mcs_boot: int = 5000
    out: str = "out"

    @property
    def slots_per_day(self) -> int | None:
        f = str(self.frequency).strip()
        if not f:
            return None
        return FREQUENCY_PRESETS[f] if f in FREQUENCY_PRESETS else int(f)

    def digest(self) -> str:
        """Hash of every setting except the output directory."""
        data = asdict(self)
        data.pop("out")
        blob = json.dumps(data, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "on", "true", "yes"):
        return True
    if t in ("0", "off", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _levels(text) -> tuple[float, ...]:
    vals = sorted(float(v) for v in str(text).replace(" ", "").split(",") if v)
    if not vals or any(not 0 < v < 1 for v in vals):
        raise ValueError("levels must be a comma-separated list in (0, 1)")
    return tuple(vals)


def _named_paths(text: str, base: Path) -> dict:
    # "wpd:a.csv, gpd:b.csv" or bare paths named after their stem
    out = {}
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        name, _, path = item.rpartition(":") if ":" in item else ("", "", item)
        p = (base / path) if not Path(path).is_absolute() else Path(path)
        out[name or Path(path).stem] = str(p)
    return out


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Read a ``key = value`` file and apply overrides."""
    raw: dict[str, str] = {}
    base = Path.cwd()
    if path:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        parser.optionxform = str
        parser.read_string("[run]\n" + p.read_text(encoding="utf-8"))
        raw = dict(parser["run"])
        base = p.resolve().parent
    # command-line paths are relative to the working directory
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in _PATH_KEYS and not Path(value).is_absolute():
            value = str(Path.cwd() / value)
        raw[key] = value
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ValueError(f"unknown configuration key(s): {unknown}")
    cfg = RunConfig()
    for key, value in raw.items():
        default = getattr(cfg, key)
        if key in ("forecasts", "scores"):
            value = value if isinstance(value, dict) else _named_paths(value, base)
        elif key == "levels":
            value = _levels(value) if not isinstance(value, tuple) else value
        elif key in _PATH_KEYS:
            value = str(value).strip()
            if value and not Path(value).is_absolute():
                value = str(base / value)
        elif isinstance(default, bool):
            value = _bool(value)
        elif isinstance(default, int):
            value = int(value)
        elif isinstance(default, float):
            value = float(value)
        setattr(cfg, key, value)
    cfg.family = Family.parse(cfg.family).short_name
    if cfg.shape_scaling not in ("fisher", "unit"):
        raise ValueError("shape_scaling must be 'fisher' or 'unit'")
    return cfg


# --------------------------------------------------------------------------
# pipeline helpers
# --------------------------------------------------------------------------


def load_panels(cfg: RunConfig) -> tuple[ReturnPanel, ReturnPanel]:
    """Raw and calendar-adjusted return panels."""
    if not cfg.prices:
        raise ValueError("configuration key 'prices' is required")
    prices = read_prices_csv(cfg.prices)
    calendar = read_calendar_csv(cfg.calendar) if cfg.calendar else None
    raw = build_return_panel(prices, cfg.slots_per_day)
    raw.flags = calendar_flags(raw.dates, calendar)
    adjusted = adjust_calendar_effects(raw) if cfg.calendar_adjust else raw
    return raw, adjusted


def _provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.digest(), "seed": cfg.seed, "version": __version__,
            "generator": GENERATOR_NAME}


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n", encoding="utf-8")


def _write_json(data: dict, path: Path) -> None:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(type(o).__name__)

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=default, allow_nan=False)
        fh.write("\n")


def _finite_or_none(d):
    if isinstance(d, dict):
        return {k: _finite_or_none(v) for k, v in d.items()}
    if isinstance(d, float) and not math.isfinite(d):
        return None
    return d


def _fit_one(args):
    kind, x, q, options = args
    return fit_mle(kind, x, q, options)


def fit_window(cfg: RunConfig, panel: ReturnPanel):
    """Fit every slot on the first ``window`` days."""
    s = min(cfg.window, panel.n_days)
    rows = slice(0, s)
    processed = negate_and_shift(panel, rows=rows)
    x = processed.values[rows]
    q = None
    if cfg.seasonal:
        prof = seasonal_profile(processed.negated()[rows].sum(axis=1), panel.dates[rows])
        q = prof.at(panel.dates[rows])
    options = FitOptions(seed=cfg.seed, shape_scaling=cfg.shape_scaling)
    jobs = [(cfg.family, x[:, j], q, options) for j in range(panel.n_slots)]
    n_workers = min(worker_count(cfg.workers or None), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            models = list(pool.map(_fit_one, jobs))
    else:
        models = [_fit_one(j) for j in jobs]
    return models, processed.shift, x, q


def cmd_fit(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _, panel = load_panels(cfg)
    models, shift, x, q = fit_window(cfg, panel)
    slots = []
    scores = {}
    for j, m in enumerate(models):
        entry = _finite_or_none(m.to_dict())
        entry["slot"] = j + 1
        entry["slot_time"] = panel.slot_labels[j] if panel.slot_labels else ""
        slots.append(entry)
        scores[f"slot_{j + 1}"] = m.filter(x[:, j], q).std_score_lam
    archive = {"meta": {**_provenance(cfg), "family": cfg.family, "window": int(x.shape[0]),
                        "shift": shift, "n_slots": panel.n_slots},
               "slots": slots}
    _write_json(archive, out / "fit.json")
    frame = pd.DataFrame({"date": panel.dates[: x.shape[0]].strftime("%Y-%m-%d"), **scores})
    frame["config_hash"] = cfg.digest()
    _write_csv(frame, out / "scores.csv")
    return EXIT_OK if all(m.converged for m in models) else EXIT_PARTIAL


def load_archive(path) -> list[FittedSlotModel]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"model archive not found: {p}")
    data = json.loads(p.read_text(encoding="utf-8"))
    return [FittedSlotModel.from_dict(s) for s in sorted(data["slots"], key=lambda s: s["slot"])]


def cmd_forecast(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    raw, panel = load_panels(cfg)
    models = load_archive(cfg.archive) if cfg.archive else None
    if models is not None and models[0].kind.short_name != cfg.family:
        raise ValueError(f"archive holds {models[0].kind.short_name} models, config asks for {cfg.family}")
    series = rolling_forecast(
        panel, cfg.family, window=cfg.window, horizon=cfg.horizon or None, levels=cfg.levels,
        M=cfg.M, B=cfg.B, seed=cfg.seed, refit_every=cfg.refit_every,
        fit_options=FitOptions(seed=cfg.seed, shape_scaling=cfg.shape_scaling),
        discretize=cfg.discretize, seasonal=cfg.seasonal, workers=cfg.workers or None,
        models=models,
    )
    frame = series.to_frame()
    prov = _provenance(cfg)
    frame["config_hash"] = prov["config_hash"]
    frame["version"] = prov["version"]
    _write_csv(frame, out / "forecast.csv")
    days = slice(cfg.window, cfg.window + len(series))
    losses = pd.DataFrame({"date": raw.dates[days].strftime("%Y-%m-%d"),
                           "loss": -raw.values[days].sum(axis=1)})
    losses["config_hash"] = prov["config_hash"]
    _write_csv(losses, out / "losses.csv")
    failures = series.notes.get("failures", {})
    if failures:
        _write_json({"meta": prov, "failures": failures}, out / "forecast_failures.json")
    return EXIT_PARTIAL if failures else EXIT_OK


def _read_forecast(path) -> pd.DataFrame:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"forecast file not found: {p}")
    frame = pd.read_csv(p)
    need = {"date", "level", "var"}
    if need - set(frame.columns):
        raise ValueError(f"{p}: needs columns {sorted(need)}")
    wide = frame.pivot(index="date", columns="level", values="var")
    wide.index = pd.to_datetime(wide.index)
    wide.columns = [float(c) for c in wide.columns]
    return wide.sort_index()


def _read_losses(cfg: RunConfig) -> pd.Series:
    if cfg.returns:
        p = Path(cfg.returns)
        if not p.exists():
            raise FileNotFoundError(f"returns file not found: {p}")
        frame = pd.read_csv(p)
        idx = pd.to_datetime(frame["date"])
        if "loss" in frame.columns:
            return pd.Series(frame["loss"].to_numpy(float), index=idx)
        if "return" in frame.columns:
            return pd.Series(-frame["return"].to_numpy(float), index=idx)
        raise ValueError(f"{p}: needs a 'return' or 'loss' column")
    raw, _ = load_panels(cfg)
    return pd.Series(-raw.values.sum(axis=1), index=raw.dates)


def cmd_backtest(cfg: RunConfig) -> int:
    if not cfg.forecasts:
        raise ValueError("configuration key 'forecasts' is required")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = {name: _read_forecast(path) for name, path in cfg.forecasts.items()}
    dates = [set(f.index) for f in frames.values()]
    if any(d != dates[0] for d in dates[1:]):
        odd = sorted(set.union(*dates) - set.intersection(*dates))
        shown = ", ".join(str(d.date()) for d in odd[:5])
        raise ValueError(f"forecast dates are not aligned across models: {shown}")
    losses = _read_losses(cfg)
    levels = [a for a in cfg.levels if all(a in f.columns for f in frames.values())]
    if not levels:
        levels = sorted(set.intersection(*(set(f.columns) for f in frames.values())))
    scores = {}
    for name, path in cfg.scores.items():
        frame = pd.read_csv(path)
        scores[name] = frame[[c for c in frame.columns if c.startswith("slot_")]]
    report = backtest(losses, frames, levels, dq_lags=cfg.dq_lags, mcs_level=cfg.mcs_level,
                      mcs_boot=cfg.mcs_boot, seed=cfg.seed, scores=scores)
    prov = _provenance(cfg)
    report.meta.update(prov)
    table = report.table.copy()
    table["config_hash"] = prov["config_hash"]
    table["seed"] = cfg.seed
    table["version"] = prov["version"]
    _write_csv(table, out / "report.csv")
    _write_json(report.to_dict(), out / "report.json")
    index = next(iter(frames.values())).index
    plot = pd.DataFrame({"date": index.strftime("%Y-%m-%d"),
                         "actual_loss": losses.reindex(index).to_numpy()})
    for name, f in frames.items():
        prefix = "" if len(frames) == 1 else f"{name}_"
        for a in levels:
            plot[f"{prefix}var_level_{a:g}"] = f[a].to_numpy()
    plot["config_hash"] = prov["config_hash"]
    _write_csv(plot, out / "plot.csv")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdvar", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"gdvar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fit", "forecast", "backtest", "selftest"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--family", choices=["wpd", "gpd", "rpd"])
        p.add_argument("--levels", help="comma-separated confidence levels")
        p.add_argument("--out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        from gdvar.selftest import run_selftest

        return run_selftest()
    out_dir = Path(args.out or "out")
    try:
        cfg = load_config(args.config, {"seed": args.seed, "family": args.family,
                                        "levels": args.levels, "out": args.out})
        out_dir = Path(cfg.out)
        command = {"fit": cmd_fit, "forecast": cmd_forecast, "backtest": cmd_backtest}[args.command]
        return command(cfg)
    except Exception as exc:  # every failure becomes a machine-readable record
        record = {"error": {"command": args.command, "type": type(exc).__name__,
                            "message": str(exc)}}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            record["error"]["traceback"] = traceback.format_exc()
            _write_json(record, out_dir / "error.json")
        except OSError:
            pass
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
