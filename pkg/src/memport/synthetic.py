"""Deterministic synthetic OHLC fixtures (geometric random walk)."""
from __future__ import annotations

import csv

import numpy as np
import pandas as pd

DEFAULT_TICKERS = ("AAA", "BBB", "CCC", "DDD", "EEE", "FFF", "GGG")


def generate_ohlc_frame(
    tickers=DEFAULT_TICKERS,
    start: str = "2000-01-03",
    years: int = 17,
    seed: int = 20200929,
) -> pd.DataFrame:
    """Daily OHLC rows for a fixed-seed geometric random walk per ticker.

    Weekday dates only.  Highs/lows bracket the open-close body by a small
    lognormal range, so every row satisfies the OHLC inequalities.
    """
    rng = np.random.default_rng(seed)
    dates = pd.bdate_range(start, periods=int(years * 261))
    n = len(dates)
    frames = []
    for k, ticker in enumerate(tickers):
        s0 = 20.0 + 10.0 * k
        drift = 0.0001
        vol = 0.004 + 0.0006 * k  # heterogeneous daily vols across assets
        log_steps = drift + vol * rng.standard_normal(n)
        closes = s0 * np.exp(np.cumsum(log_steps))
        opens = np.r_[s0, closes[:-1]]
        body_hi = np.maximum(opens, closes)
        body_lo = np.minimum(opens, closes)
        pad_hi = np.abs(rng.standard_normal(n)) * 0.05
        pad_lo = np.abs(rng.standard_normal(n)) * 0.05
        frames.append(
            pd.DataFrame(
                {
                    "date": dates.strftime("%Y-%m-%d"),
                    "ticker": ticker,
                    "open": np.round(opens, 6),
                    "high": np.round(body_hi * np.exp(pad_hi), 6),
                    "low": np.round(body_lo * np.exp(-pad_lo), 6),
                    "close": np.round(closes, 6),
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def write_ohlc_csv(path, frame: pd.DataFrame | None = None, **kwargs) -> None:
    """Write a generated (or provided) OHLC frame as the loader's CSV schema."""
    if frame is None:
        frame = generate_ohlc_frame(**kwargs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "ticker", "open", "high", "low", "close"])
        for row in frame.itertuples(index=False):
            writer.writerow([row.date, row.ticker, f"{row.open:.6f}", f"{row.high:.6f}", f"{row.low:.6f}", f"{row.close:.6f}"])
