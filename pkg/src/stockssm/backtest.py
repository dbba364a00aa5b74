"""Daily top-k equal-weight backtest and portfolio metrics."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError

TRADING_DAYS = 252
UNDEFINED = "undefined"
METRIC_NAMES = ("arr", "avol", "mdd", "asr", "ir", "cr")


@dataclass(frozen=True)
class BacktestReport:
    portfolio: np.ndarray  # [T]
    benchmark: np.ndarray  # [T]
    equity: np.ndarray  # [T], cumprod(1 + portfolio)
    holdings: list[tuple[str, ...]]
    metrics: dict[str, float | None]


def top_k(scores: np.ndarray, k: int, tickers: Sequence[str]) -> list[int]:
    """Indices of the k highest finite scores; ties go to the smaller ticker."""
    scores = np.asarray(scores, dtype=np.float64)
    valid = np.flatnonzero(~np.isnan(scores))
    if len(valid) < len(scores):
        warnings.warn(f"{len(scores) - len(valid)} NaN score(s) excluded from ranking", stacklevel=3)
    names = np.array(tickers, dtype=object)[valid]
    order = sorted(range(len(valid)), key=lambda p: (-scores[valid[p]], names[p]))
    return [int(valid[p]) for p in order[:k]]


def simulate(scores: np.ndarray, returns: np.ndarray, k: int = 9,
             tickers: Sequence[str] | None = None) -> BacktestReport:
    """Hold the top-k scored stocks each day with equal weights, no costs.

    ``scores[t]`` ranks stocks using information through day t;
    ``returns[t]`` is the return earned by holding from the next open onward.
    """
    scores = np.asarray(scores, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    if scores.shape != returns.shape or scores.ndim != 2:
        raise ValueError(f"scores {scores.shape} and returns {returns.shape} must be equal [T, N]")
    n = scores.shape[1]
    if not 1 <= k <= n:
        raise ConfigError(f"k={k} must lie in [1, {n}]")
    tickers = list(tickers) if tickers is not None else [f"{i:06d}" for i in range(n)]
    port = np.empty(len(scores))
    holdings = []
    for t, (s, r) in enumerate(zip(scores, returns)):
        held = top_k(s, k, tickers)
        # index order, so k = N sums exactly like the benchmark
        port[t] = r[np.sort(held)].mean()
        holdings.append(tuple(tickers[i] for i in held))
    bench = np.array([r.mean() for r in returns])
    return BacktestReport(port, bench, np.cumprod(1.0 + port), holdings, metrics(port, bench))


def max_drawdown(equity: np.ndarray) -> float:
    """``-max_t (peak_t - equity_t) / peak_t`` with the running peak."""
    equity = np.asarray(equity, dtype=np.float64)
    peak = np.maximum.accumulate(equity)
    return 0.0 - float(np.max((peak - equity) / peak))  # no negative zero


def _std(x: np.ndarray) -> float:
    # exactly constant series: avoid the rounding residue of np.std
    return 0.0 if np.ptp(x) == 0 else float(np.std(x, ddof=1))


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0 and math.isfinite(den) else None


def metrics(portfolio: np.ndarray, benchmark: np.ndarray) -> dict[str, float | None]:
    """ARR, AVol, MDD, ASR, IR, CR from daily returns; ``None`` marks undefined ratios.

    Annualization uses 252 days; standard deviations are sample (ddof=1); the
    drawdown path starts from an initial equity of 1.
    """
    rp = np.asarray(portfolio, dtype=np.float64)
    rb = np.asarray(benchmark, dtype=np.float64)
    if len(rp) < 2:
        raise ValueError("need at least 2 daily returns")
    equity = np.cumprod(1.0 + rp)
    years = len(rp) / TRADING_DAYS
    arr = float(equity[-1] ** (1.0 / years) - 1.0)
    avol = _std(rp) * math.sqrt(TRADING_DAYS)
    mdd = max_drawdown(np.concatenate([[1.0], equity]))
    excess = rp - rb
    sd = _std(excess)
    ir = float(np.mean(excess)) / sd * math.sqrt(TRADING_DAYS) if sd > 0 else None
    return {"arr": arr, "avol": avol, "mdd": mdd, "asr": _ratio(arr, avol),
            "ir": ir, "cr": _ratio(arr, abs(mdd))}


def write_metrics_json(path: str | Path, values: dict[str, float | None], **extra) -> None:
    payload = {k: (UNDEFINED if v is None else v) for k, v in values.items()}
    payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_equity_csv(path: str | Path, report: BacktestReport, dates: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "portfolio_return", "benchmark_return", "equity"])
        for row in zip(dates, report.portfolio, report.benchmark, report.equity):
            w.writerow([row[0], *(repr(float(x)) for x in row[1:])])


def write_holdings_csv(path: str | Path, report: BacktestReport, dates: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "rank", "ticker"])
        for day, held in zip(dates, report.holdings):
            for rank, tk in enumerate(held, 1):
                w.writerow([day, rank, tk])


def write_svg(path: str | Path, series: np.ndarray, title: str = "equity",
              width: int = 640, height: int = 240) -> None:
    """Single polyline plot, no axes beyond a min/max label."""
    y = np.asarray(series, dtype=np.float64)
    lo, hi = float(y.min()), float(y.max())
    span = hi - lo or 1.0
    xs = np.linspace(10, width - 10, len(y))
    ys = height - 20 - (y - lo) / span * (height - 40)
    pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(xs, ys))
    Path(path).write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<text x="10" y="14" font-size="12">{title} (min {lo:.4g}, max {hi:.4g})</text>\n'
        f'<polyline fill="none" stroke="black" stroke-width="1" points="{pts}"/>\n</svg>\n',
        encoding="utf-8")
