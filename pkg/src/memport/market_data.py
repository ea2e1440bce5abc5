"""OHLC ingestion and the empirical inputs for conservative pricing.

Everything downstream (quantile grids, scenario matrices, bid-ask boxes)
is derived here from a single tidy CSV of daily open/high/low/close rows.
All functions are pure; loaded series are immutable.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date

import numpy as np
import pandas as pd

OHLC_COLUMNS = ("date", "ticker", "open", "high", "low", "close")


@dataclass(frozen=True)
class OhlcSeries:
    """Dated OHLC history for one ticker, sorted by date.

    Invariants (enforced on construction): dates strictly increasing,
    all prices positive, and low <= min(open, close) <= max(open, close) <= high
    on every row.
    """

    ticker: str
    dates: np.ndarray  # datetime64[D]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        if n == 0:
            raise ValueError(f"{self.ticker}: empty series")
        for name in ("open", "high", "low", "close"):
            arr = getattr(self, name)
            if len(arr) != n:
                raise ValueError(f"{self.ticker}: column {name} length mismatch")
            if not np.all(arr > 0):
                bad = self.dates[np.argmax(arr <= 0)]
                raise ValueError(f"{self.ticker} {bad}: nonpositive {name}")
        if n > 1 and not np.all(self.dates[1:] > self.dates[:-1]):
            i = int(np.argmax(self.dates[1:] <= self.dates[:-1]))
            raise ValueError(f"{self.ticker}: dates not strictly increasing at {self.dates[i + 1]}")
        body_lo = np.minimum(self.open, self.close)
        body_hi = np.maximum(self.open, self.close)
        ok = (self.low <= body_lo) & (body_hi <= self.high)
        if not np.all(ok):
            bad = self.dates[np.argmax(~ok)]
            raise ValueError(f"{self.ticker} {bad}: OHLC inequality low <= open,close <= high violated")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class BidAskRange:
    """A bid-ask box [bid, ask]; bid == ask is the pointwise (degenerate) case."""

    bid: float
    ask: float

    def __post_init__(self):
        if not (0 < self.bid <= self.ask):
            raise ValueError(f"invalid bid-ask range ({self.bid}, {self.ask}): need 0 < bid <= ask")


@dataclass(frozen=True)
class QuantileGrid:
    """Per-asset empirical quantiles q_i(j/N), j = 1..N, as an M x N array.

    Rows are nondecreasing order statistics, so each row is a discretized
    right-continuous inverse CDF of that asset's price law.
    """

    values: np.ndarray  # shape (M, N)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.size == 0:
            raise ValueError("quantile grid must be a nonempty M x N array")
        if not np.all(self.values > 0):
            raise ValueError("quantile grid values must be positive")
        if not np.all(np.diff(self.values, axis=1) >= 0):
            raise ValueError("quantile grid rows must be nondecreasing")

    @property
    def n_assets(self) -> int:
        return self.values.shape[0]

    @property
    def grid_size(self) -> int:
        return self.values.shape[1]


def load_ohlc(path) -> dict[str, OhlcSeries]:
    """Load a tidy OHLC CSV into one validated series per ticker.

    The file must carry the header ``date,ticker,open,high,low,close``
    with ISO dates and decimal prices.  Rows may appear in any order;
    each ticker's rows are sorted by date here.

    Raises
    ------
    ValueError
        On a malformed row (message carries the 1-based line number), a
        duplicate ticker-date, or a violated OHLC inequality (message
        names the ticker and date).
    """
    rows_by_ticker: dict[str, list[tuple[date, float, float, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != OHLC_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(OHLC_COLUMNS)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(OHLC_COLUMNS):
                raise ValueError(f"{path} line {lineno}: expected {len(OHLC_COLUMNS)} fields, got {len(row)}")
            try:
                day = date.fromisoformat(row[0].strip())
                ticker = row[1].strip()
                o, h, l, c = (float(v) for v in row[2:6])
            except ValueError as exc:
                raise ValueError(f"{path} line {lineno}: {exc}") from None
            if not ticker:
                raise ValueError(f"{path} line {lineno}: empty ticker")
            rows_by_ticker.setdefault(ticker, []).append((day, o, h, l, c))

    out = {}
    for ticker, rows in rows_by_ticker.items():
        rows.sort(key=lambda r: r[0])
        days = [r[0] for r in rows]
        if len(set(days)) != len(days):
            dup = next(d for i, d in enumerate(days[1:]) if d == days[i])
            raise ValueError(f"{ticker}: duplicate date {dup}")
        out[ticker] = OhlcSeries(
            ticker=ticker,
            dates=np.array(days, dtype="datetime64[D]"),
            open=np.array([r[1] for r in rows], dtype=float),
            high=np.array([r[2] for r in rows], dtype=float),
            low=np.array([r[3] for r in rows], dtype=float),
            close=np.array([r[4] for r in rows], dtype=float),
        )
    return out


def sample_periodic_closes(series: OhlcSeries, frequency: str = "M") -> list[tuple[date, float]]:
    """Last available close in each calendar period (default: month end).

    Periods with no trading rows simply do not appear; nothing is filled in.
    """
    idx = pd.DatetimeIndex(series.dates)
    periods = idx.to_period(frequency)
    keep = np.r_[periods[1:] != periods[:-1], True]
    return [
        (pd.Timestamp(d).date(), float(c))
        for d, c in zip(series.dates[keep], series.close[keep])
    ]


def gross_returns(prices) -> np.ndarray:
    """Consecutive price ratios prices[k+1] / prices[k]."""
    p = np.asarray(prices, dtype=float)
    if p.ndim != 1 or len(p) < 2:
        raise ValueError("need at least two prices")
    if not np.all(p > 0):
        raise ValueError("prices must be positive")
    return p[1:] / p[:-1]


def estimate_bid_ask(series: OhlcSeries, t: date, window_days: int = 30) -> BidAskRange:
    """Bid-ask box at date ``t`` from the trailing epoch [t - window_days, t).

    Bid is the mean of the daily lows in the epoch, ask the mean of the
    daily highs.  The per-row low <= high invariant makes bid <= ask.
    Days absent from the data contribute nothing (no imputation).
    """
    t64 = np.datetime64(t, "D")
    lo = t64 - np.timedelta64(int(window_days), "D")
    mask = (series.dates >= lo) & (series.dates < t64)
    if not mask.any():
        raise ValueError(f"{series.ticker}: no rows in bid-ask epoch [{lo}, {t64})")
    return BidAskRange(bid=float(series.low[mask].mean()), ask=float(series.high[mask].mean()))


def scenario_prices(returns: np.ndarray, s0) -> np.ndarray:
    """Price scenarios: row i of the return matrix scaled by the price vector s0."""
    r = np.asarray(returns, dtype=float)
    s = np.asarray(s0, dtype=float)
    if r.ndim != 2:
        raise ValueError("return matrix must be 2-D")
    if s.shape != (r.shape[1],):
        raise ValueError(f"price vector length {s.shape} does not match {r.shape[1]} assets")
    if not np.all(s > 0):
        raise ValueError("prices must be positive")
    if not np.all(r > 0):
        raise ValueError("gross returns must be positive")
    return r * s


def empirical_quantile_grid(scenarios: np.ndarray, n_grid: int) -> QuantileGrid:
    """Discretize each asset's scenario column into N order-statistic quantiles.

    Convention: q_i(j/N) is the order statistic of column i at rank
    ceil(j * n_obs / N), the right-continuous empirical inverse CDF.
    """
    scen = np.asarray(scenarios, dtype=float)
    if scen.ndim != 2 or scen.shape[0] == 0:
        raise ValueError("scenario matrix must be nonempty and 2-D")
    if n_grid < 1:
        raise ValueError("grid size must be >= 1")
    n_obs = scen.shape[0]
    j = np.arange(1, n_grid + 1)
    ranks = (j * n_obs + n_grid - 1) // n_grid  # ceil(j * n_obs / N), integer-exact
    ordered = np.sort(scen, axis=0)
    return QuantileGrid(values=ordered[ranks - 1, :].T.copy())
