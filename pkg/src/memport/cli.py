"""Command-line front end: price, backtest, report.

Exit codes: 0 success, 1 domain/solver error, 2 usage error.  Every output
embeds the fully resolved configuration so runs are reproducible.  A
key=value config file may preset any flag; explicit command-line flags win.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass
from datetime import date
from pathlib import Path

import numpy as np

from . import backtest as bt
from . import market_data as md
from . import mem

SHARED_FLAGS = {
    "rate": (float, 0.0, "per-period continuously-compounded rate"),
    "grid_size": (int, 100, "quantile grid size N"),
    "mode": (str, "unbounded", "pricing mode: unbounded, bounded, or both (price only)"),
    "bound": (float, 100.0, "increment bound L for bounded mode"),
    "bidask_days": (int, 30, "trailing epoch length in days for bid-ask estimation"),
    "capital": (float, 1e5, "initial capital C0"),
    "gamma": (float, 1000.0, "mean-variance risk aversion"),
    "window_months": (int, 60, "in-sample window length in months"),
    "step_months": (int, 12, "months between successive windows"),
    "jobs": (int, 1, "parallel window workers (0 = auto)"),
}


@dataclass(frozen=True)
class RunConfig:
    input: str
    tickers: tuple[str, ...] | None
    rate: float
    grid_size: int
    mode: str
    bound: float
    bidask_days: int
    capital: float
    gamma: float
    window_months: int
    step_months: int
    output: str
    format: str
    jobs: int
    price_date: str | None = None


def _read_config_file(path: str) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path} line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memport",
        description="Conservative pricing from bid-ask ranges and rolling-window portfolio backtests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shared(p):
        p.add_argument("--input", required=False, help="OHLC CSV file")
        p.add_argument("--tickers", help="comma-separated ticker filter")
        for name, (typ, default, doc) in SHARED_FLAGS.items():
            p.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None, help=f"{doc} (default {default})")
        p.add_argument("--output", help="output file or directory")
        p.add_argument("--format", choices=("json", "csv"), default=None, help="output format (default json)")
        p.add_argument("--config", help="key=value config file; command line overrides")

    p_price = sub.add_parser("price", help="per-asset bid, ask, current and conservative prices")
    add_shared(p_price)
    p_price.add_argument("--date", help="pricing epoch end (ISO date; default: last month end)")

    p_back = sub.add_parser("backtest", help="rolling-window portfolio experiment")
    add_shared(p_back)

    p_rep = sub.add_parser("report", help="merge quartile tables of prior backtest reports")
    p_rep.add_argument("paths", nargs="+", help="report JSON files")
    p_rep.add_argument("--output", help="output file (default stdout)")
    p_rep.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def _resolve_config(args) -> RunConfig:
    file_values = _read_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(name, typ, default):
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            return cli_val
        if name in file_values:
            return typ(file_values[name])
        return default

    input_path = pick("input", str, None)
    if not input_path:
        raise UsageError("--input is required")
    tickers = pick("tickers", str, None)
    if tickers is not None:
        tickers = tuple(t.strip() for t in tickers.split(",") if t.strip())
        if not tickers:
            raise ValueError("no assets selected")
    values = {name: pick(name, typ, default) for name, (typ, default, _) in SHARED_FLAGS.items()}
    if values["mode"] not in ("unbounded", "bounded", "both"):
        raise UsageError(f"unknown mode {values['mode']!r}")
    return RunConfig(
        input=input_path,
        tickers=tickers,
        output=pick("output", str, None),
        format=pick("format", str, "json") or "json",
        price_date=getattr(args, "date", None),
        **values,
    )


class UsageError(Exception):
    pass


def _load_selected(config: RunConfig) -> dict[str, md.OhlcSeries]:
    series_map = md.load_ohlc(config.input)
    if config.tickers is not None:
        missing = [t for t in config.tickers if t not in series_map]
        if missing:
            raise ValueError(f"tickers not in input: {missing}")
        series_map = {t: series_map[t] for t in config.tickers}
    if not series_map:
        raise ValueError("no assets selected")
    return series_map


def _config_dict(config: RunConfig) -> dict:
    out = asdict(config)
    out["tickers"] = list(config.tickers) if config.tickers else None
    return out


def cmd_price(config: RunConfig) -> dict:
    series_map = _load_selected(config)
    closes = bt.monthly_close_table(series_map)
    if config.price_date is not None:
        target = date.fromisoformat(config.price_date)
        eligible = [i for i, d in enumerate(closes.index) if d <= target]
        if not eligible:
            raise ValueError(f"no monthly closes on or before {target}")
        end = eligible[-1]
    else:
        end = len(closes) - 1
    lo = end + 1 - config.window_months
    if lo < 0:
        raise ValueError(
            f"need {config.window_months} monthly closes before the pricing date, have {end + 1}"
        )
    tickers = list(closes.columns)
    in_sample = closes.iloc[lo : end + 1]
    t_end = in_sample.index[-1]
    s0_current = in_sample.iloc[-1].to_numpy(dtype=float)
    ranges = [md.estimate_bid_ask(series_map[t], t_end, config.bidask_days) for t in tickers]
    returns = np.column_stack(
        [md.gross_returns(in_sample[t].to_numpy(dtype=float)) for t in tickers]
    )
    scenarios = md.scenario_prices(returns, s0_current)
    grid = md.empirical_quantile_grid(scenarios, config.grid_size)
    problem = mem.build_discretization(grid, ranges, config.rate)

    modes = ("unbounded", "bounded") if config.mode == "both" else (config.mode,)
    solutions = {
        m: mem.solve_mem(problem, mem.SolverOptions(bound=config.bound), m) for m in modes
    }
    assets = []
    for i, ticker in enumerate(tickers):
        row = {
            "ticker": ticker,
            "current": bt._sig15(float(s0_current[i])),
            "bid": bt._sig15(ranges[i].bid),
            "ask": bt._sig15(ranges[i].ask),
        }
        for m, sol in solutions.items():
            row[f"price_{m}"] = bt._sig15(float(sol.prices[i]))
        assets.append(row)
    return {
        "schema_version": bt.SCHEMA_VERSION,
        "config": _config_dict(config),
        "epoch_end": str(t_end),
        "residuals": {m: bt._sig15(sol.residual) for m, sol in solutions.items()},
        "assets": assets,
    }


def _write_price_csv(result: dict, fh) -> None:
    price_cols = sorted(
        {k for row in result["assets"] for k in row if k.startswith("price_")}
    )
    writer = csv.writer(fh)
    writer.writerow(["ticker", "current", "bid", "ask", *price_cols])
    for row in result["assets"]:
        writer.writerow(
            [row["ticker"]]
            + [f"{row[c]:.15g}" for c in ("current", "bid", "ask")]
            + [f"{row[c]:.15g}" for c in price_cols]
        )


def _write_quartiles_csv(quartiles: dict, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["objective", "price_source", "q0", "q1", "median", "q3", "q4", "support"])
    for key in sorted(quartiles):
        objective, source = key.split("/")
        row = quartiles[key]
        writer.writerow(
            [objective, f"S(0)_{source}"]
            + [f"{row[c]:.15g}" for c in ("q0", "q1", "median", "q3", "q4")]
            + [row["support"]]
        )


def _emit(payload: dict, config_format: str, output, csv_writer) -> None:
    if output:
        path = Path(output)
        if config_format == "csv":
            with open(path, "w", newline="") as fh:
                csv_writer(payload, fh)
        else:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
    else:
        if config_format == "csv":
            csv_writer(payload, sys.stdout)
        else:
            json.dump(payload, sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")


def cmd_backtest(config: RunConfig) -> dict:
    if config.mode == "both":
        raise UsageError("backtest requires a single mode (unbounded or bounded)")
    series_map = _load_selected(config)
    bt_config = bt.BacktestConfig(
        rate=config.rate,
        grid_size=config.grid_size,
        mode=config.mode,
        bound=config.bound,
        bidask_days=config.bidask_days,
        capital=config.capital,
        gamma=config.gamma,
        window_months=config.window_months,
        step_months=config.step_months,
        jobs=config.jobs,
    )
    results = bt.run_backtest(series_map, bt_config)
    report = bt.build_report(results, _config_dict(config))
    if config.output:
        outdir = Path(config.output)
        if outdir.suffix:  # a file path: write the report there, CSVs next to it
            bt.write_report(report, outdir)
            bt.write_boxplot_csvs(report, outdir.parent)
            if config.format == "csv":
                with open(outdir.with_suffix(".quartiles.csv"), "w", newline="") as fh:
                    _write_quartiles_csv(report["quartiles"], fh)
        else:
            outdir.mkdir(parents=True, exist_ok=True)
            bt.write_report(report, outdir / "report.json")
            bt.write_boxplot_csvs(report, outdir)
            if config.format == "csv":
                with open(outdir / "quartiles.csv", "w", newline="") as fh:
                    _write_quartiles_csv(report["quartiles"], fh)
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return report


def cmd_report(paths: list[str], output: str | None, fmt: str) -> dict:
    reports = []
    for path in paths:
        with open(path) as fh:
            reports.append(json.load(fh))
    merged = bt.merge_reports(reports)
    _emit(
        merged if fmt == "json" else merged["quartiles"],
        fmt,
        output,
        lambda payload, fh: _write_quartiles_csv(payload, fh),
    )
    return merged


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            cmd_report(args.paths, args.output, args.format)
            return 0
        config = _resolve_config(args)
        if args.command == "price":
            result = cmd_price(config)
            _emit(result, config.format, config.output, lambda p, fh: _write_price_csv(p, fh))
        else:
            cmd_backtest(config)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, mem.ConvergenceError, mem.IntegrityError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
