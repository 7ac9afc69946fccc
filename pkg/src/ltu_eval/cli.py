"""Command-line entry point: ``ltu-eval <subcommand> [options]``.

Settings resolve in three layers: built-in defaults, then the section of
the YAML config file named after the subcommand (``estimate_duration`` for
``estimate-duration``), then command-line flags. The config path comes from
``--config`` or the ``LTU_EVAL_CONFIG`` environment variable. Every run
writes a manifest; failures also print a JSON error report on stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .bandwidth_select import select_bandwidth, window_for
from .duration_rdd import estimate_itt, months_to_days, placebo_battery
from .errors import ConfigError, InputNotFound, LtuEvalError
from .indirect_fx import near_far_welch, outcome_diff_by_duration, smoothed_diff_curve
from .panel_ingest import (
    DEFAULT_BALANCE_COVARIATES,
    NON_BASELINE_SHARE_COLUMNS,
    DailySeries,
    daily_collapse,
    ingest,
    read_cells,
    read_contract_table,
    write_cells,
    write_contracts,
)
from .stats_core import significance_stars
from .subsidy_calc import SubsidyRates, compare_from_csv
from .synth_dgp import DgpConfig, EstimatorSpec, monte_carlo, simulate_corpus, simulate_panel
from .time_rdd import AuxSeries, estimate_time_itt, robustness_battery_time

CONFIG_ENV = "LTU_EVAL_CONFIG"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 70

DEFAULTS = {
    "ingest": {
        "contracts": None, "window": ["2008-01-01", "2016-12-31"], "days": ["2011-01-01", "2014-12-31"],
        "durations": [714, 744], "regions": None, "hire_types": None, "covariates": True, "ignore_types": [],
        "output": "cells.csv", "daily": False, "histogram": False, "threshold": 729,
    },
    "select_bandwidth": {
        "cells": None, "threshold": 729, "max_half_width": 30, "alpha": 0.15, "correction": "none",
        "extra_treated": 0, "covariates": "balance", "output": "bandwidth",
    },
    "estimate_duration": {
        "cells": None, "contracts": None, "window": [714, 744], "threshold": 729, "period": None,
        "covariates": [], "weights": None, "select_bandwidth": False, "max_half_width": 30, "alpha": 0.15,
        "battery": False, "ingest_window": ["2008-01-01", "2016-12-31"], "days": ["2011-01-01", "2014-12-31"],
        "regions": None, "output": "duration_rdd",
    },
    "estimate_time": {
        "series": None, "cells": None, "contracts": None, "threshold_date": "2015-01-01", "exclude_month": [],
        "center_time": True, "battery": False, "durations": [714, 744], "ingest_window": ["2008-01-01", "2016-12-31"],
        "days": ["2010-01-01", "2015-12-31"], "gdp": None, "consumption": None, "unemployment_share": None,
        "output": "time_rdd",
    },
    "indirect_effects": {
        "cells": None, "contracts": None, "near": [714, 728], "far": [[365, 380], [545, 560]],
        "years": [2011, 2012, 2013, 2014], "after_years": [2015], "sample_unit": "day", "threshold": 729,
        "split_date": "2015-01-01", "bandwidth": None, "durations": [365, 728],
        "ingest_window": ["2008-01-01", "2016-12-31"], "days": ["2011-01-01", "2015-12-31"], "output": "indirect",
    },
    "subsidy_compare": {
        "input": None, "fraction_mode": "class", "blended_fraction": None, "rates": {}, "output": "subsidy",
    },
    "simulate": {
        "panel": False, "days": ["2011-01-01", "2014-12-31"], "durations": [714, 744], "output": None,
    },
    "monte_carlo": {
        "estimator": "duration_rdd", "replications": 100, "level": "panel", "window": [714, 744],
        "select_window": False, "max_half_width": 30, "alpha": 0.05, "output": "monte_carlo.json",
    },
    "report": {"inputs": [], "output": "report"},
}

DGP_FLAGS = ("seed", "n_workers", "true_itt", "time_jump", "displacement_intensity", "postponement_intensity")


class Run:
    """Bookkeeping for one invocation: resolved settings, inputs, outputs."""

    def __init__(self, command: str, settings: dict, out_dir: Path):
        self.command = command
        self.settings = settings
        self.out_dir = out_dir
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.extra: dict = {}

    def input(self, path) -> Path:
        p = Path(path)
        if not p.is_file():
            raise InputNotFound(f"input file not found: {p}")
        self.inputs.append(p)
        return p

    def output(self, name) -> Path:
        p = Path(name)
        if not p.is_absolute():
            p = self.out_dir / p
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(p)
        return p


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (dt.date, Path)):
        return str(value)
    return value


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(run: Run, stem: str, rows: list[dict], meta: dict | None = None) -> None:
    """Emit ``rows`` as ``<stem>.csv`` (flattened) and ``<stem>.json``."""
    rows = [_jsonable(r) for r in rows]
    frame = pd.json_normalize(rows, sep=".") if rows else pd.DataFrame()
    for col in frame.columns:
        if frame[col].map(lambda v: isinstance(v, list)).any():
            frame[col] = frame[col].map(lambda v: json.dumps(v) if isinstance(v, list) else v)
    frame.to_csv(run.output(f"{stem}.csv"), index=False, lineterminator="\n", float_format="%.17g")
    dump_json({"rows": rows, **({"meta": meta} if meta else {})}, run.output(f"{stem}.json"))


def write_plot(run: Run, stem: str, frame: pd.DataFrame, sidecar: dict) -> None:
    """Plot data as CSV with a JSON sidecar naming the axes and markers."""
    frame.to_csv(run.output(f"{stem}.csv"), index=False, lineterminator="\n", float_format="%.17g")
    dump_json({"data": f"{stem}.csv", **sidecar}, run.output(f"{stem}.json"))


# -- config ------------------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {p}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {p} must be a mapping at the top level")
    return data


def resolve(command: str, config: dict, args: argparse.Namespace) -> dict:
    section = command.replace("-", "_")
    settings = dict(DEFAULTS[section])
    from_file = config.get(section) or {}
    if not isinstance(from_file, dict):
        raise ConfigError(f"config section {section!r} must be a mapping")
    unknown = set(from_file) - set(settings)
    if unknown:
        raise ConfigError(f"unknown keys in config section {section!r}: {sorted(unknown)}")
    settings.update(from_file)
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def dgp_config(config: dict, args: argparse.Namespace) -> DgpConfig:
    data = dict(config.get("dgp") or {})
    for key in DGP_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return DgpConfig.from_dict(data)


def _pair(value, name, cast=int) -> tuple:
    try:
        lo, hi = value
        return cast(lo), cast(hi)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a pair of values, got {value!r}") from None


def _month(text: str) -> tuple[int, int]:
    try:
        y, m = str(text).split("-")
        y, m = int(y), int(m)
    except ValueError:
        raise ConfigError(f"month must be YYYY-MM, got {text!r}") from None
    if not 1 <= m <= 12:
        raise ConfigError(f"month out of range in {text!r}")
    return y, m


def _covariates(value) -> tuple:
    if value in (None, "", "none"):
        return ()
    if value == "balance":
        return DEFAULT_BALANCE_COVARIATES
    if value == "all":
        return NON_BASELINE_SHARE_COLUMNS
    if isinstance(value, str):
        value = [v for v in value.split(",") if v]
    return tuple(value)


# -- data loading ------------------------------------------------------------


def _contracts(run: Run, path):
    table, diagnostics = read_contract_table(run.input(path))
    run.extra["parse_diagnostics"] = len(diagnostics)
    return table, diagnostics


def _panel(run: Run, s: dict, durations, *, covariates=True, threads=1):
    if s.get("cells"):
        return read_cells(run.input(s["cells"]))
    if s.get("contracts"):
        table, _ = _contracts(run, s["contracts"])
        return ingest(
            table, _pair(s["ingest_window"], "ingest_window", str), _pair(s["days"], "days", str), durations,
            regions=s.get("regions"), covariates=covariates, threads=threads,
        )
    raise ConfigError("need --cells or --contracts")


def _aux(run: Run, path, name) -> AuxSeries | None:
    if not path:
        return None
    frame = pd.read_csv(run.input(path))
    cols = set(frame.columns)
    if {"date", "value"} <= cols:
        return AuxSeries.daily(name, frame["date"], frame["value"])
    if {"year", "quarter", "value"} <= cols:
        return AuxSeries.quarterly(name, frame["year"], frame["quarter"], frame["value"])
    if {"year", "value"} <= cols:
        return AuxSeries.annual(name, frame["year"], frame["value"])
    raise ConfigError(f"{path}: auxiliary series needs columns (date|year[,quarter]), value")


# -- subcommands -------------------------------------------------------------


def cmd_ingest(run: Run, s: dict, threads: int, config: dict, args) -> None:
    if not s["contracts"]:
        raise ConfigError("ingest needs --contracts")
    table, diagnostics = _contracts(run, s["contracts"])
    panel = ingest(
        table, _pair(s["window"], "window", str), _pair(s["days"], "days", str), _pair(s["durations"], "durations"),
        regions=s["regions"], hire_types=s["hire_types"], covariates=s["covariates"],
        ignore_types=tuple(s["ignore_types"] or ()), threads=threads,
    )
    out = run.output(s["output"])
    write_cells(panel, out)
    run.outputs.append(Path(f"{out}.json"))
    write_table(run, "parse_diagnostics", [{"line": d.line, "reason": d.reason} for d in diagnostics])
    run.extra.update({"cells": len(panel), "empty_cells": panel.n_empty})
    if s["daily"]:
        series = daily_collapse(panel)
        series.to_frame().to_csv(run.output("daily.csv"), index=False, lineterminator="\n", float_format="%.17g")
    if s["histogram"]:
        durations = np.unique(panel.duration)
        hires = np.bincount(np.searchsorted(durations, panel.duration), weights=panel.hires, minlength=durations.size)
        write_plot(run, "hires_by_duration", pd.DataFrame({"i": durations, "hires": hires.astype(np.int64)}), {
            "kind": "histogram",
            "x": {"column": "i", "label": "days out of work at hire"},
            "y": {"column": "hires", "label": "hires"},
            "markers": [{"axis": "x", "value": int(s["threshold"]), "label": "eligibility threshold"}],
        })


def cmd_select_bandwidth(run: Run, s: dict, threads: int, config: dict, args) -> None:
    if not s["cells"]:
        raise ConfigError("select-bandwidth needs --cells")
    panel = read_cells(run.input(s["cells"]))
    sel = select_bandwidth(
        panel, int(s["threshold"]), int(s["max_half_width"]), float(s["alpha"]),
        covariates=_covariates(s["covariates"]), extra_treated=int(s["extra_treated"]), correction=s["correction"],
    )
    rows = []
    for rep in sel.trail:
        for cov, res in rep.per_covariate.items():
            rows.append({
                "window_lo": rep.window[0], "window_hi": rep.window[1], "covariate": cov,
                "mean_diff": res.mean_diff, "statistic": res.statistic, "p_value": res.p_value,
                "stars": significance_stars(res.p_value), "window_balanced": rep.balanced,
            })
    write_table(run, s["output"], rows, {"selected_window": list(sel.window), "half_width": sel.half_width,
                                         "alpha": float(s["alpha"])})
    run.extra["selected_window"] = list(sel.window)


def cmd_estimate_duration(run: Run, s: dict, threads: int, config: dict, args) -> None:
    threshold = int(s["threshold"])
    window = _pair(s["window"], "window")
    covs = _covariates(s["covariates"])
    durations = window_for(int(s["max_half_width"]), threshold) if s["select_bandwidth"] else window
    period = _pair(s["period"], "period", str) if s["period"] else None
    if s["battery"] and not s["cells"]:
        # placebo thresholds and the placebo year need a wider panel than the base fit
        half = (window[1] - window[0]) // 2 + 1
        durations = (min(durations[0], months_to_days(22) - half), max(durations[1], months_to_days(26) + half))
        days = _pair(s["days"], "days", str)
        period = period or days
        s = dict(s, days=[days[0], max(days[1], "2015-12-31")])
    need_shares = bool(covs) or s["select_bandwidth"]
    panel = _panel(run, s, durations, covariates=need_shares or s["battery"], threads=threads)
    meta = {}
    if s["select_bandwidth"]:
        sel = select_bandwidth(panel, threshold, int(s["max_half_width"]), float(s["alpha"]))
        window = sel.window
        meta["selected_window"] = list(window)
    if s["battery"]:
        result = placebo_battery(panel, window, threshold, period, covariates=covs or None, threads=threads)
        rows = [e.to_dict() for e in result.estimates]
        meta["failures"] = [f.__dict__ for f in result.failures]
    else:
        est = estimate_itt(panel, window, threshold, period, covariates=covs, weights=s["weights"])
        rows = [est.to_dict()]
    write_table(run, s["output"], rows, meta)


def cmd_estimate_time(run: Run, s: dict, threads: int, config: dict, args) -> None:
    months = [_month(m) for m in (s["exclude_month"] or [])]
    durations = _pair(s["durations"], "durations")
    if s["series"]:
        series = DailySeries.from_frame(pd.read_csv(run.input(s["series"])))
    else:
        series = daily_collapse(_panel(run, s, durations, covariates=s["battery"], threads=threads), durations=durations)
    if months == [(2015, 12)]:
        tag = "exclude_december"
    else:
        tag = "standard" if not months else "exclude_months"
    est = estimate_time_itt(series, s["threshold_date"], exclude_months=months, center_time=bool(s["center_time"]),
                            variant_tag=tag, label=tag)
    rows = [est.to_dict()]
    meta = {}
    if s["battery"]:
        # the battery carries its own standard and month-excluded fits
        rows = []
        result = robustness_battery_time(
            series, s["threshold_date"], gdp=_aux(run, s["gdp"], "gdp"),
            consumption=_aux(run, s["consumption"], "consumption"),
            unemployment_share=_aux(run, s["unemployment_share"], "unemployment_share"),
            exclude_months=months or ((2015, 12),), center_time=bool(s["center_time"]), threads=threads,
        )
        rows += [e.to_dict() for e in result.estimates]
        meta["skipped"] = [{"label": lab, "reason": why} for lab, why in result.skipped]
    write_table(run, s["output"], rows, meta)
    curve = est.curve_frame()
    write_plot(run, f"{s['output']}_curve", curve, {
        "kind": "line",
        "x": {"column": "day", "label": "date"},
        "y": {"columns": ["y", "fitted", "counterfactual"], "label": "daily hire share"},
        "markers": [{"axis": "x", "value": str(s["threshold_date"]), "label": "policy change"}],
    })
    frame = series.to_frame()
    when = pd.to_datetime(frame["day"])
    post = when >= pd.Timestamp(str(s["threshold_date"]))
    frame = frame.assign(month=when.dt.month, side=np.where(post, "after", "before"))
    monthly = frame.groupby(["month", "side"])["y"].mean().unstack("side").reindex(columns=["before", "after"])
    monthly = monthly.reset_index().rename(columns={"before": "mean_before", "after": "mean_after"})
    write_plot(run, f"{s['output']}_monthly", monthly, {
        "kind": "grouped_bar",
        "x": {"column": "month", "label": "calendar month"},
        "y": {"columns": ["mean_before", "mean_after"], "label": "mean daily hire share"},
        "markers": [],
    })


def cmd_indirect_effects(run: Run, s: dict, threads: int, config: dict, args) -> None:
    near = _pair(s["near"], "near")
    far = tuple(_pair(w, "far") for w in s["far"])
    lo = min(near[0], *(w[0] for w in far))
    hi = max(near[1], *(w[1] for w in far))
    durations = _pair(s["durations"], "durations")
    durations = (min(lo, durations[0]), max(hi, durations[1]))
    panel = _panel(run, s, durations, covariates=False, threads=threads)
    rows = near_far_welch(panel, near, far, [int(y) for y in s["years"]], [int(y) for y in s["after_years"]],
                          sample_unit=s["sample_unit"])
    out = []
    for r in rows:
        d = r.to_dict()
        d["stars"] = significance_stars(d["p_value"])
        out.append(d)
    write_table(run, s["output"], out)
    diffs = outcome_diff_by_duration(panel, int(s["threshold"]), s["split_date"])
    curve = smoothed_diff_curve(diffs, threshold=int(s["threshold"]), bandwidth=s["bandwidth"])
    write_plot(run, f"{s['output']}_curve", curve.to_frame(), {"kind": "line", **curve.sidecar()})


def cmd_subsidy_compare(run: Run, s: dict, threads: int, config: dict, args) -> None:
    if not s["input"]:
        raise ConfigError("subsidy-compare needs --input")
    try:
        rates = SubsidyRates(**(s["rates"] or {}))
    except TypeError as exc:
        raise ConfigError(f"bad subsidy rates: {exc}") from None
    kwargs = {"fraction_mode": s["fraction_mode"], "blended_fraction": s["blended_fraction"]}
    rows = compare_from_csv(run.input(s["input"]), rates, **kwargs)
    write_table(run, s["output"], [r.to_dict() for r in rows])


def cmd_simulate(run: Run, s: dict, threads: int, config: dict, args) -> None:
    cfg = dgp_config(config, args)
    run.extra["dgp"] = cfg.to_dict()
    if s["panel"]:
        panel = simulate_panel(cfg, _pair(s["days"], "days", str), [_pair(s["durations"], "durations")],
                               rep=0, covariates=True)
        out = run.output(s["output"] or "cells.csv")
        write_cells(panel, out)
        run.outputs.append(Path(f"{out}.json"))
        return
    corpus = simulate_corpus(cfg)
    write_contracts(corpus.table, run.output(s["output"] or "contracts.csv"))
    t = corpus.truth
    pd.DataFrame({
        "worker": t.worker, "end": t.end, "potential_length": t.potential_length,
        "observed_length": t.observed_length, "hired": t.hired.astype(int),
    }).to_csv(run.output("truth.csv"), index=False, lineterminator="\n")


def cmd_monte_carlo(run: Run, s: dict, threads: int, config: dict, args) -> None:
    cfg = dgp_config(config, args)
    spec = EstimatorSpec(
        name=s["estimator"], level=s["level"], window=_pair(s["window"], "window"),
        select_window=bool(s["select_window"]), max_half_width=int(s["max_half_width"]), alpha=float(s["alpha"]),
    )
    report = monte_carlo(cfg, int(s["replications"]), spec, threads=threads)
    out = run.output(s["output"])
    out.write_text(json.dumps(_jsonable({**report.to_dict(), "dgp": cfg.to_dict()}), indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    run.extra["runtime_seconds"] = report.runtime_seconds


def cmd_report(run: Run, s: dict, threads: int, config: dict, args) -> None:
    paths = []
    for item in s["inputs"] or []:
        p = Path(item)
        if p.is_dir():
            paths += sorted(q for q in p.glob("*.json") if not q.name.startswith("manifest"))
        else:
            paths.append(run.input(p))
    if not paths:
        raise ConfigError("report needs --inputs (JSON tables or directories)")
    sections = {}
    lines = ["# ltu-eval report", ""]
    for p in paths:
        if p not in run.inputs:
            run.inputs.append(p)
        data = json.loads(p.read_text(encoding="utf-8"))
        sections[p.name] = data
        rows = data.get("rows") if isinstance(data, dict) else None
        lines.append(f"## {p.stem}")
        lines.append("")
        if rows:
            frame = pd.json_normalize(rows)
            keep = [c for c in frame.columns if not isinstance(frame[c].iloc[0], (list, dict))][:12]
            lines.append(_markdown_table(frame[keep]))
        elif isinstance(data, dict):
            flat = {k: v for k, v in data.items() if not isinstance(v, (list, dict))}
            lines.append(_markdown_table(pd.DataFrame([flat])))
        lines.append("")
    dump_json(sections, run.output(f"{s['output']}.json"))
    run.output(f"{s['output']}.md").write_text("\n".join(lines), encoding="utf-8")


def _markdown_table(frame: pd.DataFrame) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    head = "| " + " | ".join(map(str, frame.columns)) + " |"
    rule = "|" + "---|" * len(frame.columns)
    body = ["| " + " | ".join(fmt(v) for v in row) + " |" for row in frame.itertuples(index=False)]
    return "\n".join([head, rule, *body])


COMMANDS = {
    "ingest": cmd_ingest,
    "select-bandwidth": cmd_select_bandwidth,
    "estimate-duration": cmd_estimate_duration,
    "estimate-time": cmd_estimate_time,
    "indirect-effects": cmd_indirect_effects,
    "subsidy-compare": cmd_subsidy_compare,
    "simulate": cmd_simulate,
    "monte-carlo": cmd_monte_carlo,
    "report": cmd_report,
}


# -- argument parsing --------------------------------------------------------


def _bool_flag(p, name, help_text):
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action=argparse.BooleanOptionalAction, default=None,
                   help=help_text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"YAML config file (default: ${CONFIG_ENV})")
    common.add_argument("--threads", type=int, help="maximum worker threads")
    common.add_argument("--out-dir", dest="out_dir", help="directory for outputs (default: current)")
    common.add_argument("--manifest", help="manifest path (default: <out-dir>/manifest_<command>.json)")
    common.add_argument("--output", help="output file or stem")

    parser = argparse.ArgumentParser(prog="ltu-eval", description="Hiring-subsidy evaluation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text)

    def pair(p, name, help_text, cast=int):
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), nargs=2, type=cast, metavar=("LO", "HI"),
                       help=help_text)

    p = add("ingest", "contract records to a (duration, day) cell panel")
    p.add_argument("--contracts", help="contract CSV")
    pair(p, "window", "observation window (dates)", str)
    pair(p, "days", "calendar-day range of cells (dates)", str)
    pair(p, "durations", "duration range of cells")
    p.add_argument("--regions", nargs="+", help="region names, or 'mezzogiorno'")
    p.add_argument("--hire-types", dest="hire_types", nargs="+", help="contract types counted as hires")
    p.add_argument("--ignore-types", dest="ignore_types", nargs="+", help="contract types ignored entirely")
    _bool_flag(p, "covariates", "compute covariate shares")
    _bool_flag(p, "daily", "also write the pooled daily series")
    _bool_flag(p, "histogram", "also write hires by duration as plot data")

    p = add("select-bandwidth", "largest balanced window around the threshold")
    p.add_argument("--cells", help="cell panel CSV")
    p.add_argument("--threshold", type=int)
    p.add_argument("--max-half-width", dest="max_half_width", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--correction", choices=["none", "bonferroni"])
    p.add_argument("--covariates", help="comma list of share columns, 'balance' or 'all'")

    p = add("estimate-duration", "eligibility effect across the duration threshold")
    p.add_argument("--cells", help="cell panel CSV")
    p.add_argument("--contracts", help="contract CSV (ingested first)")
    pair(p, "window", "duration window")
    pair(p, "period", "calendar period (dates)", str)
    pair(p, "days", "calendar-day range when ingesting (dates)", str)
    p.add_argument("--threshold", type=int)
    p.add_argument("--covariates", help="comma list of share columns, 'balance' or 'all'")
    p.add_argument("--weights", choices=["group_size"])
    _bool_flag(p, "select-bandwidth", "choose the window by covariate balance first")
    p.add_argument("--max-half-width", dest="max_half_width", type=int)
    p.add_argument("--alpha", type=float)
    _bool_flag(p, "battery", "run every robustness and placebo variant")

    p = add("estimate-time", "jump in the daily hire share at the policy date")
    p.add_argument("--series", help="daily series CSV")
    p.add_argument("--cells", help="cell panel CSV")
    p.add_argument("--contracts", help="contract CSV (ingested first)")
    p.add_argument("--threshold-date", dest="threshold_date")
    p.add_argument("--exclude-month", dest="exclude_month", action="append", metavar="YYYY-MM")
    _bool_flag(p, "center-time", "measure the trend from the policy date")
    _bool_flag(p, "battery", "run every robustness variant")
    pair(p, "durations", "duration window pooled into the daily series")
    pair(p, "days", "calendar-day range when ingesting (dates)", str)
    p.add_argument("--gdp", help="GDP series CSV")
    p.add_argument("--consumption", help="consumption series CSV")
    p.add_argument("--unemployment-share", dest="unemployment_share", help="unemployment share series CSV")

    p = add("indirect-effects", "displacement and postponement diagnostics")
    p.add_argument("--cells", help="cell panel CSV")
    p.add_argument("--contracts", help="contract CSV (ingested first)")
    pair(p, "near", "near-threshold duration window")
    p.add_argument("--far", nargs=2, type=int, action="append", metavar=("LO", "HI"), help="far window (repeatable)")
    p.add_argument("--years", nargs="+", type=int)
    p.add_argument("--after-years", dest="after_years", nargs="+", type=int)
    p.add_argument("--sample-unit", dest="sample_unit", choices=["day", "cell"])
    p.add_argument("--threshold", type=int)
    p.add_argument("--split-date", dest="split_date")
    p.add_argument("--bandwidth", type=float, help="smoothing bandwidth in days")
    pair(p, "days", "calendar-day range when ingesting (dates)", str)

    p = add("subsidy-compare", "average credit under both laws by year")
    p.add_argument("--input", help="hire records or yearly averages CSV")
    p.add_argument("--fraction-mode", dest="fraction_mode", choices=["class", "blended"])
    p.add_argument("--blended-fraction", dest="blended_fraction", type=float)

    def dgp_flags(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--n-workers", dest="n_workers", type=int)
        p.add_argument("--true-itt", dest="true_itt", type=float)
        p.add_argument("--time-jump", dest="time_jump", type=float)
        p.add_argument("--displacement", dest="displacement_intensity", type=float)
        p.add_argument("--postponement", dest="postponement_intensity", type=float)

    p = add("simulate", "synthetic contract corpus or cell panel")
    dgp_flags(p)
    _bool_flag(p, "panel", "emit a cell panel instead of contracts")
    pair(p, "days", "calendar-day range of the panel (dates)", str)
    pair(p, "durations", "duration range of the panel")

    p = add("monte-carlo", "replicate an estimator on synthetic data")
    dgp_flags(p)
    p.add_argument("--estimator", choices=["duration_rdd", "time_rdd", "indirect_fx", "bandwidth"])
    p.add_argument("--replications", type=int)
    p.add_argument("--level", choices=["panel", "corpus"])
    pair(p, "window", "duration window")
    _bool_flag(p, "select-window", "choose the window by covariate balance in every replication")
    p.add_argument("--max-half-width", dest="max_half_width", type=int)
    p.add_argument("--alpha", type=float)

    p = add("report", "collect JSON tables into one summary")
    p.add_argument("--inputs", nargs="+", help="JSON tables or directories of them")
    return parser


def _error_report(command, exc) -> dict:
    if isinstance(exc, LtuEvalError):
        kind, module = type(exc).__name__, getattr(exc, "module", "ltu_eval")
    else:
        kind, module = "InternalError", "cli"
    return {"status": "error", "command": command, "error": {"type": kind, "module": module, "message": str(exc)}}


def _exit_code(exc) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, InputNotFound):
        return EXIT_INPUT
    if isinstance(exc, LtuEvalError):
        return EXIT_ERROR
    return EXIT_INTERNAL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir or ".")
    run = Run(command, {}, out_dir)
    status, error, code = "ok", None, EXIT_OK
    config_path = args.config or os.environ.get(CONFIG_ENV)
    config: dict = {}
    try:
        config = load_config(config_path)
        if config_path:
            run.inputs.append(Path(config_path))
        if args.out_dir is None and config.get("out_dir"):
            run.out_dir = out_dir = Path(config["out_dir"])
        settings = resolve(command, config, args)
        run.settings = settings
        threads = args.threads if args.threads is not None else int(config.get("threads", 1))
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        out_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[command](run, settings, threads, config, args)
    except (LtuEvalError, ValueError, OSError) as exc:
        if isinstance(exc, (ValueError, OSError)) and not isinstance(exc, LtuEvalError):
            exc = _wrap_foreign(exc)
        status, error, code = "error", _error_report(command, exc), _exit_code(exc)
    except Exception as exc:  # noqa: BLE001 - reported, never swallowed silently
        status, error, code = "error", _error_report(command, exc), EXIT_INTERNAL

    manifest = {
        "command": command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": run.settings,
        "config_file": str(config_path) if config_path else None,
        "inputs": {str(p): sha256(p) for p in run.inputs if p.is_file()},
        "outputs": {str(p): sha256(p) for p in run.outputs if p.is_file()},
        "wall_time_seconds": time.perf_counter() - t0,
        "version": __version__,
        "status": status,
        "details": run.extra,
    }
    if error:
        manifest["error"] = error["error"]
    manifest_path = Path(args.manifest) if args.manifest else out_dir / f"manifest_{command.replace('-', '_')}.json"
    try:
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        dump_json(manifest, manifest_path)
    except OSError as exc:
        if error is None:
            status, error, code = "error", _error_report(command, exc), EXIT_ERROR
    if error:
        sys.stderr.write(json.dumps(_jsonable(error), sort_keys=True) + "\n")
    return code


class _ForeignError(LtuEvalError):
    """A library error raised below the package, reported with its origin."""


def _wrap_foreign(exc: Exception) -> LtuEvalError:
    if isinstance(exc, FileNotFoundError):
        return InputNotFound(str(exc))
    wrapped = _ForeignError(f"{type(exc).__name__}: {exc}")
    tb = exc.__traceback__
    while tb is not None and tb.tb_next is not None:
        tb = tb.tb_next
    if tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "ltu_eval")
        wrapped.module = name.split(".")[1] if name.startswith("ltu_eval.") else name
    return wrapped


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
