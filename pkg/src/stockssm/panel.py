"""Stock panels: CSV ingestion, windowing, market index, normalization, synthetic data."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError, RegimeConfig

FEATURES = ("close", "open", "high", "low", "turnover", "volume")
CLOSE, OPEN, HIGH, LOW, TURNOVER, VOLUME = range(6)
PANEL_COLUMNS = ("date", "ticker") + FEATURES
INDUSTRY_COLUMNS = ("ticker", "primary", "secondary")
MAX_FFILL_DAYS = 3


class PanelError(ValueError):
    """Panel data violates the ingestion contract."""


class PanelParseError(PanelError):
    def __init__(self, source: str, lineno: int, message: str) -> None:
        super().__init__(f"{source}:{lineno}: {message}")
        self.lineno = lineno


class InsufficientHistoryError(PanelError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StockPanel:
    tickers: tuple[str, ...]
    calendar: tuple[str, ...]
    values: np.ndarray  # [N, T, F]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tickers", tuple(self.tickers))
        object.__setattr__(self, "calendar", tuple(self.calendar))
        object.__setattr__(self, "values", _readonly(self.values))
        validate_panel(self)

    @property
    def n_stocks(self) -> int:
        return len(self.tickers)

    @property
    def n_days(self) -> int:
        return len(self.calendar)

    @property
    def close(self) -> np.ndarray:
        return self.values[:, :, CLOSE]


def validate_panel(panel: StockPanel) -> None:
    n, t = len(panel.tickers), len(panel.calendar)
    if panel.values.shape != (n, t, len(FEATURES)):
        raise PanelError(f"values shape {panel.values.shape} != {(n, t, len(FEATURES))}")
    if len(set(panel.tickers)) != n:
        raise PanelError("tickers must be unique")
    if n < 2:
        raise PanelError(f"need at least 2 stocks, got {n}")
    if any(a >= b for a, b in zip(panel.calendar, panel.calendar[1:])):
        raise PanelError("calendar must be strictly increasing")
    v = panel.values
    if not np.all(np.isfinite(v)):
        raise PanelError("panel has missing or non-finite cells")
    prices = v[:, :, :4]
    if np.any(prices <= 0):
        i, d, _ = np.argwhere(prices <= 0)[0]
        raise PanelError(f"non-positive price for {panel.tickers[i]} on {panel.calendar[d]}")
    hi_bad = v[:, :, HIGH] < np.maximum(v[:, :, OPEN], v[:, :, CLOSE])
    lo_bad = v[:, :, LOW] > np.minimum(v[:, :, OPEN], v[:, :, CLOSE])
    if np.any(hi_bad | lo_bad):
        i, d = np.argwhere(hi_bad | lo_bad)[0]
        raise PanelError(f"high/low envelope violated for {panel.tickers[i]} on {panel.calendar[d]}")


@dataclass(frozen=True)
class IndustryMap:
    assignments: dict[str, tuple[str, str]]
    delta1: float = 0.5
    delta2: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta2 <= self.delta1 <= 1.0:
            raise ConfigError(f"need 0 <= delta2 <= delta1 <= 1, got {self.delta1}, {self.delta2}")

    def check_covers(self, tickers: Sequence[str]) -> None:
        missing = [t for t in tickers if t not in self.assignments]
        if missing:
            raise PanelError(f"tickers without industry assignment: {', '.join(missing)}")


@dataclass(frozen=True)
class Window:
    t: int
    features: np.ndarray  # [N, L, F], days t-L+1..t
    returns: np.ndarray  # [N], close-to-close return from t to t+1

    @property
    def lookback(self) -> int:
        return self.features.shape[1]


def _parse_date(raw: str, source: str, lineno: int) -> str:
    try:
        return dt.date.fromisoformat(raw).isoformat()
    except ValueError:
        raise PanelParseError(source, lineno, f"bad ISO date {raw!r}") from None


def _read_rows(path: Path, expected: tuple[str, ...]) -> list[tuple[int, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != expected:
            raise PanelParseError(str(path), 1, f"header must be {','.join(expected)}")
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(expected):
                raise PanelParseError(str(path), reader.line_num,
                                      f"expected {len(expected)} fields, got {len(row)}")
            rows.append((reader.line_num, [c.strip() for c in row]))
    return rows


def load_industry(path: str | Path, delta1: float = 0.5, delta2: float = 0.1) -> IndustryMap:
    assignments: dict[str, tuple[str, str]] = {}
    for lineno, (ticker, primary, secondary) in _read_rows(Path(path), INDUSTRY_COLUMNS):
        if ticker in assignments:
            raise PanelError(f"{path}:{lineno}: duplicate industry row for {ticker}")
        assignments[ticker] = (primary, secondary)
    return IndustryMap(assignments, delta1, delta2)


def load_panel(csv_path: str | Path, industry_path: str | Path, missing: str = "reject",
               delta1: float = 0.5, delta2: float = 0.1) -> tuple[StockPanel, IndustryMap]:
    """Read a long-format panel CSV and its industry CSV.

    ``missing`` is ``"reject"`` (any absent ticker/day cell is an error) or
    ``"ffill"`` (carry the previous day forward, at most three days in a row).
    """
    if missing not in ("reject", "ffill"):
        raise ConfigError(f"missing policy must be 'reject' or 'ffill', got {missing!r}")
    source = str(csv_path)
    cells: dict[tuple[str, str], np.ndarray] = {}
    for lineno, row in _read_rows(Path(csv_path), PANEL_COLUMNS):
        date = _parse_date(row[0], source, lineno)
        ticker = row[1]
        if not ticker:
            raise PanelParseError(source, lineno, "empty ticker")
        try:
            vals = np.array([float(x) for x in row[2:]], dtype=np.float64)
        except ValueError:
            raise PanelParseError(source, lineno, f"non-numeric field in {row[2:]}") from None
        if not np.all(np.isfinite(vals)):
            raise PanelParseError(source, lineno, "non-finite value")
        if np.any(vals[:4] <= 0):
            raise PanelError(f"non-positive price for {ticker} on {date} (line {lineno})")
        if (ticker, date) in cells:
            raise PanelError(f"duplicate row for {ticker} on {date} (line {lineno})")
        cells[(ticker, date)] = vals

    tickers = sorted({k[0] for k in cells})
    calendar = sorted({k[1] for k in cells})
    values = np.full((len(tickers), len(calendar), len(FEATURES)), np.nan)
    for i, tk in enumerate(tickers):
        run = 0
        for d, day in enumerate(calendar):
            vals = cells.get((tk, day))
            if vals is not None:
                values[i, d] = vals
                run = 0
                continue
            if missing == "reject":
                raise PanelError(f"missing row for {tk} on {day}")
            run += 1
            if d == 0 or run > MAX_FFILL_DAYS:
                raise PanelError(f"cannot forward-fill {tk} on {day}")
            values[i, d] = values[i, d - 1]

    industry = load_industry(industry_path, delta1, delta2)
    industry.check_covers(tickers)
    return StockPanel(tuple(tickers), tuple(calendar), values), industry


def write_panel(panel: StockPanel, industry: IndustryMap, csv_path: str | Path,
                industry_path: str | Path) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PANEL_COLUMNS)
        for d, day in enumerate(panel.calendar):
            for i, tk in enumerate(panel.tickers):
                w.writerow([day, tk, *(repr(float(x)) for x in panel.values[i, d])])
    with open(industry_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDUSTRY_COLUMNS)
        for tk in panel.tickers:
            w.writerow([tk, *industry.assignments[tk]])


@dataclass(frozen=True)
class Scaler:
    """Per-stock, per-feature z-score fitted on a day range."""

    mean: np.ndarray  # [N, 1, F]
    std: np.ndarray  # [N, 1, F]

    @classmethod
    def fit(cls, panel: StockPanel, end_day: int) -> "Scaler":
        """Fit on days ``0..end_day`` inclusive."""
        if not 0 <= end_day < panel.n_days:
            raise PanelError(f"end_day {end_day} outside the calendar")
        block = panel.values[:, : end_day + 1]
        mean = block.mean(axis=1, keepdims=True)
        std = block.std(axis=1, keepdims=True)
        std = np.where(std > 1e-12, std, 1.0)
        return cls(_readonly(mean), _readonly(std))

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


def n_windows(n_days: int, lookback: int) -> int:
    return n_days - lookback


def make_windows(panel: StockPanel, lookback: int, scaler: Scaler | None = None) -> list[Window]:
    """All windows ending on days ``L-1..T-2``; labels are raw close returns."""
    if lookback < 1:
        raise ConfigError("lookback must be positive")
    if panel.n_days < lookback + 1:
        raise InsufficientHistoryError(
            f"need at least {lookback + 1} days for lookback {lookback}, got {panel.n_days}")
    feats = panel.values if scaler is None else scaler.transform(panel.values)
    close = panel.close
    out = []
    for t in range(lookback - 1, panel.n_days - 1):
        ret = (close[:, t + 1] - close[:, t]) / close[:, t]
        out.append(Window(t, _readonly(feats[:, t - lookback + 1: t + 1]), _readonly(ret)))
    return out


def market_index(window: Window | np.ndarray) -> np.ndarray:
    """Cross-sectional mean of the window features, shape ``[1, L, F]``."""
    feats = window.features if isinstance(window, Window) else np.asarray(window)
    if feats.shape[0] < 1:
        raise PanelError("market index needs at least one stock")
    return feats.mean(axis=0, keepdims=True)


def gen_synthetic(seed: int, n_stocks: int, n_days: int,
                  regimes: RegimeConfig | None = None) -> tuple[StockPanel, IndustryMap]:
    """Factor-model panel: market factor + industry factors + idiosyncratic noise.

    Falling segments carry a negative drift and a larger market volatility, so
    cross-stock co-movement is stronger there than in rising segments.
    """
    if n_stocks < 2:
        raise ConfigError(f"need at least 2 stocks, got {n_stocks}")
    if n_days < 30:
        raise ConfigError(f"need at least 30 days, got {n_days}")
    cfg = regimes or RegimeConfig()
    if cfg.n_primary < 1 or cfg.n_secondary < 1:
        raise ConfigError("industry counts must be positive")
    if min(cfg.rising_vol, cfg.falling_vol, cfg.industry_vol, cfg.idio_vol) < 0:
        raise ConfigError("volatilities must be non-negative")
    segments = cfg.resolved_segments(n_days)
    rng = np.random.default_rng(seed)

    drift = np.full(n_days, cfg.rising_drift)
    vol = np.full(n_days, cfg.rising_vol)
    for start, end, kind in segments:
        if kind == "falling":
            drift[start:end] = cfg.falling_drift
            vol[start:end] = cfg.falling_vol

    primary = np.arange(n_stocks) % cfg.n_primary
    secondary = primary * cfg.n_secondary + (np.arange(n_stocks) // cfg.n_primary) % cfg.n_secondary
    n_sec = cfg.n_primary * cfg.n_secondary

    market = drift + vol * rng.standard_normal(n_days)
    sector = cfg.industry_vol * rng.standard_normal((n_sec, n_days))
    idio = cfg.idio_vol * rng.standard_normal((n_stocks, n_days))
    # persistent order flow: visible in today's volume, it moves tomorrow's price
    # level by signal * flow (transient pressure, so it does not accumulate)
    flow = np.empty((n_stocks, n_days))
    flow[:, 0] = rng.standard_normal(n_stocks)
    shocks = rng.standard_normal((n_stocks, n_days))
    for d in range(1, n_days):
        flow[:, d] = cfg.flow_persistence * flow[:, d - 1] + shocks[:, d]
    pressure = np.zeros((n_stocks, n_days))
    pressure[:, 1:] = cfg.signal * flow[:, :-1]
    rets = market[None, :] + sector[secondary] + idio
    rets[:, 1:] += np.diff(pressure, axis=1)
    rets = np.clip(rets, -0.5, 0.5)
    rets[:, 0] = 0.0

    start_price = np.exp(rng.uniform(np.log(10.0), np.log(200.0), size=n_stocks))
    close = start_price[:, None] * np.cumprod(1.0 + rets, axis=1)
    gap = 1.0 + 0.003 * rng.standard_normal((n_stocks, n_days))
    prev_close = np.concatenate([start_price[:, None], close[:, :-1]], axis=1)
    open_ = prev_close * gap
    spread_hi = np.abs(0.004 * rng.standard_normal((n_stocks, n_days)))
    spread_lo = np.abs(0.004 * rng.standard_normal((n_stocks, n_days)))
    high = np.maximum(open_, close) * (1.0 + spread_hi)
    low = np.minimum(open_, close) * (1.0 - spread_lo)
    base_volume = rng.uniform(1e5, 1e6, size=n_stocks)
    volume = base_volume[:, None] * np.exp(cfg.volume_noise * rng.standard_normal((n_stocks, n_days))
                                           + cfg.flow_loading * flow)
    volume *= 1.0 + cfg.volume_reaction * np.abs(rets)
    turnover = volume * close / 1e6

    values = np.stack([close, open_, high, low, turnover, volume], axis=-1)
    width = max(2, len(str(n_stocks - 1)))
    tickers = tuple(f"S{i:0{width}d}" for i in range(n_stocks))
    first = dt.date(2020, 1, 1)
    calendar = tuple((first + dt.timedelta(days=d)).isoformat() for d in range(n_days))
    assignments = {tk: (f"P{primary[i]}", f"P{primary[i]}-S{secondary[i]}")
                   for i, tk in enumerate(tickers)}
    return StockPanel(tickers, calendar, values), IndustryMap(assignments)


@dataclass
class Split:
    train: list[int] = field(default_factory=list)
    val: list[int] = field(default_factory=list)
    test: list[int] = field(default_factory=list)


def chronological_split(n: int, train_frac: float, val_frac: float) -> Split:
    """Split ``n`` window indices into consecutive train/val/test blocks."""
    n_train = int(np.floor(n * train_frac))
    n_val = int(np.floor(n * val_frac))
    if n_train < 1:
        raise ConfigError(f"empty training split ({n} windows)")
    idx = list(range(n))
    return Split(idx[:n_train], idx[n_train:n_train + n_val], idx[n_train + n_val:])
