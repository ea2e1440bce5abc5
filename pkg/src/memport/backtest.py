"""Rolling-window evaluation of conservative-price vs current-price portfolios.

Each window takes a fixed number of monthly closes, estimates a bid-ask box
per asset from trailing daily highs/lows, solves the entropy pricing problem,
and then optimizes the exponential-utility and mean-variance portfolios twice:
once budgeted at the current (last close) prices and once at the conservative
prices.  Per window we keep the portfolio return evaluated on every in-sample
scenario row (the boxplot distribution) and, when the data extends one more
month, the realized next-month gross return.

Windows are independent pure computations, so the harness may run them in a
thread pool; results are merged in window order, keeping reports deterministic.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date

import numpy as np
import pandas as pd

from . import market_data as md
from . import mem
from . import portfolio as pf

SCHEMA_VERSION = 1

OBJECTIVES = ("eu", "mv")
PRICE_SOURCES = ("current", "mem")


@dataclass(frozen=True)
class WindowSpec:
    length_months: int = 60
    step_months: int = 12

    def __post_init__(self):
        if self.length_months < 2:
            raise ValueError("window length must be >= 2 months")
        if self.step_months < 1:
            raise ValueError("window step must be >= 1 month")


@dataclass
class CellResult:
    holdings: np.ndarray | None = None
    in_sample: np.ndarray | None = None
    realized: float | None = None
    error: str | None = None


@dataclass
class WindowResult:
    index: int
    start: date
    end: date
    bids: np.ndarray
    asks: np.ndarray
    mem_prices: np.ndarray | None
    mem_residual: float | None
    mem_iterations: int | None
    mem_error: str | None
    current_prices: np.ndarray
    cells: dict[str, CellResult] = field(default_factory=dict)


@dataclass(frozen=True)
class QuartileTable:
    """Average five-number summaries keyed by 'objective/source'."""

    rows: dict[str, dict[str, float]]

    def __post_init__(self):
        for key, row in self.rows.items():
            q = [row["q0"], row["q1"], row["median"], row["q3"], row["q4"]]
            if any(a > b for a, b in zip(q, q[1:])):
                raise ValueError(f"quartile row {key} is not monotone: {q}")


@dataclass(frozen=True)
class BacktestConfig:
    rate: float = 0.0
    grid_size: int = 100
    mode: str = "unbounded"
    bound: float = 100.0
    bidask_days: int = 30
    capital: float = 1e5
    gamma: float = 1000.0
    window_months: int = 60
    step_months: int = 12
    jobs: int = 1


def roll_windows(n_months: int, spec: WindowSpec) -> list[tuple[int, int]]:
    """Consecutive overlapping [lo, hi) month-index windows covering the span."""
    if n_months < spec.length_months:
        raise ValueError(
            f"span of {n_months} months is shorter than one window of {spec.length_months}"
        )
    count = (n_months - spec.length_months) // spec.step_months + 1
    return [(k * spec.step_months, k * spec.step_months + spec.length_months) for k in range(count)]


def monthly_close_table(series_map: dict[str, md.OhlcSeries]) -> pd.DataFrame:
    """Month-end closes per ticker, indexed by the actual last trading date.

    Tickers must agree on the month periods they cover; the index holds the
    latest per-month close date across tickers.
    """
    if not series_map:
        raise ValueError("no assets selected")
    per_ticker = {}
    for ticker in sorted(series_map):
        samples = md.sample_periodic_closes(series_map[ticker], "M")
        per_ticker[ticker] = pd.Series(
            [c for _, c in samples],
            index=pd.PeriodIndex([pd.Timestamp(d) for d, _ in samples], freq="M"),
            name=ticker,
        )
        anchor = pd.Series(
            [d for d, _ in samples],
            index=per_ticker[ticker].index,
        )
        per_ticker[ticker + "/__date"] = anchor
    closes = pd.DataFrame({t: per_ticker[t] for t in sorted(series_map)})
    if closes.isna().any().any():
        missing = closes.columns[closes.isna().any()].tolist()
        raise ValueError(f"incomplete monthly close coverage for: {missing}")
    anchor_dates = pd.DataFrame(
        {t: per_ticker[t + "/__date"] for t in sorted(series_map)}
    ).max(axis=1)
    closes.index = pd.Index(anchor_dates.values, name="date")
    return closes


def run_window(
    series_map: dict[str, md.OhlcSeries],
    closes: pd.DataFrame,
    window: tuple[int, int],
    index: int,
    config: BacktestConfig,
) -> WindowResult:
    """Execute the full per-window pipeline; failed cells are recorded, not raised."""
    lo, hi = window
    tickers = list(closes.columns)
    in_sample = closes.iloc[lo:hi]
    t_end = in_sample.index[-1]
    s0_current = in_sample.iloc[-1].to_numpy(dtype=float)

    ranges = [
        md.estimate_bid_ask(series_map[t], t_end, config.bidask_days) for t in tickers
    ]
    bids = np.array([r.bid for r in ranges])
    asks = np.array([r.ask for r in ranges])

    returns = np.column_stack(
        [md.gross_returns(in_sample[t].to_numpy(dtype=float)) for t in tickers]
    )
    scenarios = md.scenario_prices(returns, s0_current)
    grid = md.empirical_quantile_grid(scenarios, config.grid_size)
    problem = mem.build_discretization(grid, ranges, config.rate)
    opts = mem.SolverOptions(bound=config.bound)

    mem_prices = mem_residual = mem_iters = mem_error = None
    try:
        solution = mem.solve_mem(problem, opts, config.mode)
        mem_prices = solution.prices
        mem_residual = solution.residual
        mem_iters = solution.iterations
    except (mem.ConvergenceError, mem.IntegrityError) as exc:
        mem_error = str(exc)

    s1_realized = None
    if hi < len(closes):
        s1_realized = closes.iloc[hi].to_numpy(dtype=float)

    result = WindowResult(
        index=index,
        start=in_sample.index[0],
        end=t_end,
        bids=bids,
        asks=asks,
        mem_prices=mem_prices,
        mem_residual=mem_residual,
        mem_iterations=mem_iters,
        mem_error=mem_error,
        current_prices=s0_current,
    )

    moments = pf.estimate_moments(returns)
    price_vectors = {"current": s0_current, "mem": mem_prices}
    for source in PRICE_SOURCES:
        prices = price_vectors[source]
        if prices is None:
            for objective in OBJECTIVES:
                result.cells[f"{objective}/{source}"] = CellResult(
                    error=f"no conservative prices: {mem_error}"
                )
            continue
        for objective in OBJECTIVES:
            cell = CellResult()
            try:
                if objective == "eu":
                    holdings = pf.optimize_exponential_utility(
                        scenarios, prices, config.capital
                    )
                else:
                    w = pf.optimize_mean_variance(moments, config.gamma)
                    holdings = pf.Holdings(
                        h=config.capital * w / prices, capital=config.capital
                    )
                cell.holdings = holdings.h
                cell.in_sample = scenarios @ holdings.h / holdings.capital
                if s1_realized is not None:
                    cell.realized = pf.portfolio_gross_return(holdings, s1_realized)
            except (mem.ConvergenceError, ValueError) as exc:
                cell = CellResult(error=str(exc))
            result.cells[f"{objective}/{source}"] = cell
    return result


def run_backtest(series_map: dict[str, md.OhlcSeries], config: BacktestConfig) -> list[WindowResult]:
    closes = monthly_close_table(series_map)
    spec = WindowSpec(config.window_months, config.step_months)
    windows = roll_windows(len(closes), spec)
    jobs = config.jobs
    if jobs == 0:
        import os

        jobs = os.cpu_count() or 1
    if jobs == 1:
        return [
            run_window(series_map, closes, win, i, config)
            for i, win in enumerate(windows)
        ]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(run_window, series_map, closes, win, i, config)
            for i, win in enumerate(windows)
        ]
        return [f.result() for f in futures]


def quartile_report(results: list[WindowResult]) -> QuartileTable:
    """Average each window's five-number return summary per method.

    A failed cell contributes nothing; the row's support counts the windows
    actually averaged.
    """
    if not results:
        raise ValueError("no window results to aggregate")
    rows = {}
    for objective in OBJECTIVES:
        for source in PRICE_SOURCES:
            key = f"{objective}/{source}"
            summaries = []
            for res in results:
                cell = res.cells.get(key)
                if cell is None or cell.in_sample is None or len(cell.in_sample) == 0:
                    continue
                summaries.append(
                    np.quantile(cell.in_sample, [0.0, 0.25, 0.5, 0.75, 1.0])
                )
            if not summaries:
                continue
            avg = np.mean(summaries, axis=0)
            rows[key] = {
                "q0": float(avg[0]),
                "q1": float(avg[1]),
                "median": float(avg[2]),
                "q3": float(avg[3]),
                "q4": float(avg[4]),
                "support": len(summaries),
            }
    return QuartileTable(rows=rows)


# --- report serialization -------------------------------------------------

def _sig15(x):
    """Clamp a float to 15 significant digits for stable textual output."""
    if x is None or isinstance(x, (int, bool, str)):
        return x
    return float(f"{x:.15g}")


def _listify(arr):
    return None if arr is None else [_sig15(float(v)) for v in np.asarray(arr)]


def window_to_dict(res: WindowResult) -> dict:
    return {
        "index": res.index,
        "start": str(pd.Timestamp(res.start).date()),
        "end": str(pd.Timestamp(res.end).date()),
        "bids": _listify(res.bids),
        "asks": _listify(res.asks),
        "current_prices": _listify(res.current_prices),
        "mem": {
            "prices": _listify(res.mem_prices),
            "residual": _sig15(res.mem_residual),
            "iterations": res.mem_iterations,
            "error": res.mem_error,
        },
        "cells": {
            key: {
                "holdings": _listify(cell.holdings),
                "in_sample": _listify(cell.in_sample),
                "realized": _sig15(cell.realized),
                "error": cell.error,
            }
            for key, cell in sorted(res.cells.items())
        },
    }


def build_report(results: list[WindowResult], config_dict: dict) -> dict:
    quartiles = quartile_report(results)
    return {
        "schema_version": SCHEMA_VERSION,
        "config": {k: _sig15(v) if isinstance(v, float) else v for k, v in config_dict.items()},
        "windows": [window_to_dict(r) for r in results],
        "quartiles": {
            key: {k: _sig15(v) for k, v in row.items()}
            for key, row in quartiles.rows.items()
        },
    }


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_boxplot_csvs(report: dict, outdir) -> list[str]:
    """One CSV per window with columns method, price_source, return."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for win in report["windows"]:
        path = outdir / f"boxplot_window_{win['index']:03d}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "price_source", "return"])
            for key in sorted(win["cells"]):
                cell = win["cells"][key]
                if cell["in_sample"] is None:
                    continue
                objective, source = key.split("/")
                for value in cell["in_sample"]:
                    writer.writerow([objective, source, f"{value:.15g}"])
        written.append(str(path))
    return written


def merge_reports(reports: list[dict]) -> dict:
    """Union the windows of several reports and re-average the quartiles."""
    if not reports:
        raise ValueError("need at least one report to merge")
    versions = {r.get("schema_version") for r in reports}
    if versions != {SCHEMA_VERSION}:
        raise ValueError(f"schema version mismatch: {sorted(map(str, versions))}")
    rows = {}
    for objective in OBJECTIVES:
        for source in PRICE_SOURCES:
            key = f"{objective}/{source}"
            summaries = []
            for rep in reports:
                for win in rep["windows"]:
                    cell = win["cells"].get(key)
                    if not cell or cell.get("in_sample") is None:
                        continue
                    summaries.append(
                        np.quantile(np.asarray(cell["in_sample"], dtype=float), [0.0, 0.25, 0.5, 0.75, 1.0])
                    )
            if not summaries:
                continue
            avg = np.mean(summaries, axis=0)
            rows[key] = {
                "q0": float(avg[0]),
                "q1": float(avg[1]),
                "median": float(avg[2]),
                "q3": float(avg[3]),
                "q4": float(avg[4]),
                "support": len(summaries),
            }
    table = QuartileTable(rows=rows)
    return {
        "schema_version": SCHEMA_VERSION,
        "quartiles": {
            key: {k: _sig15(v) for k, v in row.items()} for key, row in table.rows.items()
        },
    }
