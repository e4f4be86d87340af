"""Price ingestion, rolling volatility, and windowed dataset construction.

Pipeline: closing prices -> daily log returns -> 21-day rolling sample
standard deviation (annualized by sqrt(252)) -> overlapping 65-step slices
(64 inputs + the next value) -> standardized train/test datasets split on a
single global calendar date.
"""
from __future__ import annotations

import csv
import datetime as _dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

VOL_WINDOW = 21
ANNUALIZATION = math.sqrt(252.0)
WINDOW_LEN = 64


def _as_dates(dates) -> np.ndarray:
    return np.asarray(dates, dtype="datetime64[D]")


def _check_increasing(dates: np.ndarray, what: str) -> None:
    if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
        raise ValueError(f"{what}: dates must be strictly increasing")


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    dates: np.ndarray
    closes: np.ndarray

    def __post_init__(self):
        dates = _as_dates(self.dates)
        closes = np.asarray(self.closes, dtype=float)
        if dates.shape != closes.shape or dates.ndim != 1:
            raise ValueError(f"{self.ticker}: dates and closes must be 1-D and equally long")
        _check_increasing(dates, self.ticker)
        if not np.all(np.isfinite(closes)) or np.any(closes <= 0):
            raise ValueError(f"{self.ticker}: closes must be finite and strictly positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "closes", closes)

    def __len__(self) -> int:
        return self.closes.size


@dataclass(frozen=True)
class VolatilitySeries:
    """Annualized rolling volatility; ``dates[i]`` is the date of the last
    return inside window ``i``."""

    ticker: str
    dates: np.ndarray
    values: np.ndarray
    window: int = VOL_WINDOW
    annualization_factor: float = ANNUALIZATION

    def __post_init__(self):
        dates = _as_dates(self.dates)
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise ValueError(f"{self.ticker}: dates and values must be 1-D and equally long")
        _check_increasing(dates, self.ticker)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError(f"{self.ticker}: volatility must be finite and non-negative")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


# ---------------------------------------------------------------------------
# ingestion

def _parse_date(text: str, lineno: int) -> np.datetime64:
    try:
        return np.datetime64(_dt.date.fromisoformat(text.strip()), "D")
    except ValueError:
        raise DataError(f"line {lineno}: bad date {text!r} (expected YYYY-MM-DD)") from None


def _parse_close(text: str, lineno: int) -> float:
    text = text.strip()
    if not text:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {lineno}: bad close {text!r}") from None
    if not math.isfinite(value) or value <= 0:
        raise DataError(f"line {lineno}: close must be positive and finite, got {text!r}")
    return value


def ingest_prices(path, max_missing: int = 10) -> list[PriceSeries]:
    """Read a ``date,ticker,close`` CSV into cleaned price series.

    A missing observation is either an empty ``close`` field or a date of the
    file's calendar absent for a ticker inside its own first..last date span.
    Tickers with more than ``max_missing`` of them are dropped; the rest are
    forward-filled. A ticker whose first row has no close cannot be filled
    and is dropped as well. Output is sorted by ticker.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    rows: dict[str, dict[np.datetime64, float]] = {}
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        names = [h.strip().lower() for h in header]
        try:
            i_date, i_ticker, i_close = (names.index(n) for n in ("date", "ticker", "close"))
        except ValueError:
            raise DataError(f"{path}: header must contain date,ticker,close; got {header}") from None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            ticker = row[i_ticker].strip()
            if not ticker:
                raise DataError(f"line {lineno}: empty ticker")
            date = _parse_date(row[i_date], lineno)
            close = _parse_close(row[i_close], lineno)
            per_ticker = rows.setdefault(ticker, {})
            if date in per_ticker:
                raise DataError(f"line {lineno}: duplicate row for {ticker} on {date}")
            per_ticker[date] = close

    if not rows:
        raise DataError(f"{path}: no data rows")
    calendar = np.array(sorted({d for per in rows.values() for d in per}), dtype="datetime64[D]")

    out = []
    too_sparse = unfillable = 0
    for ticker in sorted(rows):
        per = rows[ticker]
        first, last = np.searchsorted(calendar, [min(per), max(per)])
        dates = calendar[first:last + 1]
        closes = np.array([per.get(d, math.nan) for d in dates])
        missing = np.isnan(closes)
        if missing.sum() > max_missing:
            too_sparse += 1
            continue
        if missing[0]:
            unfillable += 1
            continue
        idx = np.where(missing, 0, np.arange(closes.size))
        np.maximum.accumulate(idx, out=idx)
        out.append(PriceSeries(ticker, dates, closes[idx]))
    if too_sparse:
        logger.warning("dropped %d ticker(s) with more than %d missing closes", too_sparse, max_missing)
    if unfillable:
        logger.warning("dropped %d ticker(s) whose first close is missing", unfillable)
    return out


def write_prices_csv(series: Iterable[PriceSeries], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "ticker", "close"])
        for s in series:
            for d, c in zip(s.dates, s.closes):
                w.writerow([str(d), s.ticker, f"{c:.17g}"])


# ---------------------------------------------------------------------------
# volatility

def log_returns(series) -> np.ndarray:
    """``ln(close[t+1] / close[t])`` for a PriceSeries or array of closes."""
    closes = np.asarray(series.closes if isinstance(series, PriceSeries) else series, dtype=float)
    if closes.size < 2:
        raise ValueError("need at least two prices for a return")
    if np.any(~(closes > 0)):
        raise ValueError("non-positive price encountered")
    return np.log(closes[1:] / closes[:-1])


def rolling_volatility(returns, window: int = VOL_WINDOW, annualize: float = ANNUALIZATION) -> np.ndarray:
    """Annualized sample standard deviation (ddof=1) over each trailing window."""
    returns = np.asarray(returns, dtype=float)
    if window < 2:
        raise ValueError("window must be at least 2")
    if returns.size < window:
        raise ValueError(f"series of {returns.size} returns is shorter than window {window}")
    windows = np.lib.stride_tricks.sliding_window_view(returns, window)
    return annualize * windows.std(axis=1, ddof=1)


def volatility_series(prices: PriceSeries, window: int = VOL_WINDOW,
                      annualize: float = ANNUALIZATION) -> VolatilitySeries:
    values = rolling_volatility(log_returns(prices), window, annualize)
    return VolatilitySeries(prices.ticker, prices.dates[window:], values, window, annualize)


def write_volatility_csv(series: Iterable[VolatilitySeries], path) -> None:
    """Write ``date,ticker,volatility`` rows with 17 significant digits."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "ticker", "volatility"])
        for s in series:
            for d, v in zip(s.dates, s.values):
                w.writerow([str(d), s.ticker, f"{v:.17g}"])


def read_volatility_csv(path) -> list[VolatilitySeries]:
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    acc: dict[str, tuple[list, list]] = {}
    with handle:
        reader = csv.reader(handle)
        header = [h.strip().lower() for h in next(reader, [])]
        if header != ["date", "ticker", "volatility"]:
            raise DataError(f"{path}: header must be date,ticker,volatility")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"line {lineno}: expected 3 fields, got {len(row)}")
            try:
                value = float(row[2])
            except ValueError:
                raise DataError(f"line {lineno}: bad volatility {row[2]!r}") from None
            dates, values = acc.setdefault(row[1].strip(), ([], []))
            dates.append(_parse_date(row[0], lineno))
            values.append(value)
    try:
        return [VolatilitySeries(t, np.array(d), np.array(v)) for t, (d, v) in sorted(acc.items())]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# windows and datasets

@dataclass(frozen=True)
class Slices:
    """Overlapping ``window_len + 1`` slices; ``end_dates`` are target dates."""

    values: np.ndarray
    end_dates: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]


def windowize(values, window_len: int = WINDOW_LEN, dates=None) -> Slices:
    values = np.asarray(values, dtype=float)
    if dates is None:
        dates = np.arange(values.size).astype("datetime64[D]")
    dates = _as_dates(dates)
    n = values.size - window_len
    if n <= 0:
        logger.warning("series of length %d too short for %d-step windows", values.size, window_len)
        return Slices(np.empty((0, window_len + 1)), dates[:0])
    view = np.lib.stride_tricks.sliding_window_view(values, window_len + 1)
    return Slices(np.ascontiguousarray(view), dates[window_len:])


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    holdout_tickers: frozenset = frozenset()
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        object.__setattr__(self, "holdout_tickers", frozenset(self.holdout_tickers))


@dataclass(frozen=True)
class WindowedDataset:
    """Standardized inputs with sequence targets shifted one step ahead."""

    inputs: np.ndarray
    targets: np.ndarray
    scalar_targets: np.ndarray
    mean: float
    std: float
    tickers: np.ndarray
    end_dates: np.ndarray

    @classmethod
    def from_slices(cls, raw: np.ndarray, tickers, end_dates, mean=None, std=None) -> "WindowedDataset":
        """Build from raw ``[n, L+1]`` slices.

        Without ``mean``/``std`` the constants are the total mean and
        (population) standard deviation over every input element, so
        overlapping windows count a value once per window it appears in.
        """
        raw = np.asarray(raw, dtype=float)
        if mean is None or std is None:
            if raw.shape[0] == 0:
                raise DataError("cannot derive standardization constants from an empty training set")
            mean = float(raw[:, :-1].mean())
            std = float(raw[:, :-1].std())
        if not std > 0:
            raise DataError(f"standardization std must be positive, got {std}")
        z = (raw - mean) / std
        return cls(
            inputs=np.ascontiguousarray(z[:, :-1]),
            targets=np.ascontiguousarray(z[:, 1:]),
            scalar_targets=z[:, -1].copy(),
            mean=float(mean),
            std=float(std),
            tickers=np.asarray(tickers, dtype=object),
            end_dates=_as_dates(end_dates),
        )

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def origin(self) -> list[tuple[str, np.datetime64]]:
        return list(zip(self.tickers.tolist(), self.end_dates))

    def standardize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def destandardize(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean

    def raw_inputs(self) -> np.ndarray:
        return self.destandardize(self.inputs)

    def raw_scalar_targets(self) -> np.ndarray:
        return self.destandardize(self.scalar_targets)


def split_cut_date(series: Sequence[VolatilitySeries], train_fraction: float) -> np.datetime64:
    """First date of the test period on the union calendar of ``series``."""
    calendar = np.unique(np.concatenate([s.dates for s in series]))
    n_train = int(math.floor(train_fraction * calendar.size))
    if not 0 < n_train < calendar.size:
        raise DataError("calendar too short to split")
    return calendar[n_train]


def assert_temporal_hygiene(train: WindowedDataset, test: WindowedDataset) -> None:
    if len(train) and len(test) and test.end_dates.min() < train.end_dates.max():
        raise AssertionError("a test window ends before the last training window")


@dataclass
class DatasetBundle:
    """All datasets of one experiment.

    ``joint_test[t]`` and ``individual_test[t]`` hold the same windows of
    holdout ``t``, standardized with the joint and the per-stock training
    constants respectively.
    """

    cut_date: np.datetime64
    holdouts: tuple
    joint_train: WindowedDataset
    individual_train: dict = field(default_factory=dict)
    joint_test: dict = field(default_factory=dict)
    individual_test: dict = field(default_factory=dict)


def build_datasets(series: Sequence[VolatilitySeries], split: SplitSpec,
                   window_len: int = WINDOW_LEN) -> DatasetBundle:
    by_ticker = {s.ticker: s for s in series}
    missing = sorted(split.holdout_tickers - by_ticker.keys())
    if missing:
        raise DataError(f"holdout tickers not in panel: {missing}")
    cut = split_cut_date(series, split.train_fraction)

    train_parts, test_parts = {}, {}
    for s in sorted(series, key=lambda s: s.ticker):
        sl = windowize(s.values, window_len, s.dates)
        is_train = sl.end_dates < cut
        train_parts[s.ticker] = Slices(sl.values[is_train], sl.end_dates[is_train])
        test_parts[s.ticker] = Slices(sl.values[~is_train], sl.end_dates[~is_train])

    holdouts = tuple(sorted(split.holdout_tickers))
    pool = [t for t in sorted(by_ticker) if t not in split.holdout_tickers and len(train_parts[t])]
    if not pool:
        raise DataError("empty joint training pool")
    joint_raw = np.concatenate([train_parts[t].values for t in pool])
    joint_tickers = np.concatenate([[t] * len(train_parts[t]) for t in pool])
    joint_dates = np.concatenate([train_parts[t].end_dates for t in pool])
    joint = WindowedDataset.from_slices(joint_raw, joint_tickers, joint_dates)

    bundle = DatasetBundle(cut_date=cut, holdouts=holdouts, joint_train=joint)
    for t in holdouts:
        tr, te = train_parts[t], test_parts[t]
        if not len(te):
            raise DataError(f"holdout {t} has no test windows")
        if not len(tr):
            raise DataError(f"holdout {t} has no training windows")
        ind = WindowedDataset.from_slices(tr.values, [t] * len(tr), tr.end_dates)
        bundle.individual_train[t] = ind
        bundle.individual_test[t] = WindowedDataset.from_slices(
            te.values, [t] * len(te), te.end_dates, ind.mean, ind.std)
        bundle.joint_test[t] = WindowedDataset.from_slices(
            te.values, [t] * len(te), te.end_dates, joint.mean, joint.std)
        assert_temporal_hygiene(ind, bundle.individual_test[t])
        assert_temporal_hygiene(joint, bundle.joint_test[t])
    return bundle


# ---------------------------------------------------------------------------
# synthetic data

@dataclass(frozen=True)
class SyntheticSettings:
    """Shared-factor log-volatility panel.

    ``log v_i(t) = mu_i + phi (log v_i(t-1) - mu_i) + beta_i f(t) + sigma e_i(t)``
    with ``f(t) = factor_phi f(t-1) + factor_sigma u(t)``. ``mu_i`` and
    ``beta_i`` are drawn once per series from normals.
    """

    phi: float = 0.97
    sigma: float = 0.06
    factor_phi: float = 0.95
    factor_sigma: float = 0.005
    beta_mean: float = 1.0
    beta_sd: float = 0.25
    mu_mean: float = math.log(0.25)
    mu_sd: float = 0.3
    burn_in: int = 250
    start_date: str = "2009-01-02"

    def __post_init__(self):
        for name in ("phi", "factor_phi"):
            if not -1.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (-1, 1)")
        for name in ("sigma", "factor_sigma", "beta_sd", "mu_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")


def generate_synthetic_panel(n_series: int, n_days: int, seed: int,
                             params: SyntheticSettings | None = None) -> list[VolatilitySeries]:
    params = params or SyntheticSettings()
    if n_series < 1:
        raise ValueError("n_series must be at least 1")
    if n_days < WINDOW_LEN + 2:
        raise ValueError(f"n_days must be at least {WINDOW_LEN + 2}")
    rng = np.random.default_rng(seed)
    mu = rng.normal(params.mu_mean, params.mu_sd, n_series)
    beta = rng.normal(params.beta_mean, params.beta_sd, n_series)
    total = params.burn_in + n_days
    factor_noise = rng.standard_normal(total)
    idio_noise = rng.standard_normal((total, n_series))

    logv = np.empty((total, n_series))
    x = mu.copy()
    f = 0.0
    for t in range(total):
        if t > 0:
            f = params.factor_phi * f + params.factor_sigma * factor_noise[t]
            x = mu + params.phi * (x - mu) + beta * f + params.sigma * idio_noise[t]
        logv[t] = x
    values = np.exp(logv[params.burn_in:])

    start = np.datetime64(params.start_date, "D")
    dates = np.busday_offset(start, np.arange(n_days), roll="forward")
    width = max(3, len(str(n_series - 1)))
    return [VolatilitySeries(f"SYN{i:0{width}d}", dates, values[:, i]) for i in range(n_series)]
