"""Value and direction forecast metrics."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

METRIC_NAMES = ("rmse", "smape", "accuracy", "f1")


def _pair(actual, predicted):
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {p.shape}")
    if a.size == 0:
        raise ValueError("empty input")
    return a, p


def rmse(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def smape(actual, predicted) -> float:
    """Percent SMAPE with the halved denominator, bounded by 200; terms where
    both values are zero count as 0."""
    a, p = _pair(actual, predicted)
    denom = (np.abs(a) + np.abs(p)) / 2.0
    num = np.abs(p - a)
    terms = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return float(100.0 * terms.mean())


@dataclass(frozen=True)
class ForecastSeries:
    ticker: str
    dates: np.ndarray
    actual: np.ndarray
    predicted: np.ndarray
    previous_actual: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        if n < 1 or not len(self.actual) == len(self.predicted) == len(self.previous_actual) == n:
            raise ValueError(f"{self.ticker}: forecast arrays must be non-empty and equally long")


def directions(series: ForecastSeries) -> tuple[np.ndarray, np.ndarray]:
    """Up-moves relative to the previous actual value; no change is "not up"."""
    prev = np.asarray(series.previous_actual, dtype=float)
    actual = np.asarray(series.actual, dtype=float)
    predicted = np.asarray(series.predicted, dtype=float)
    if not prev.shape == actual.shape == predicted.shape:
        raise ValueError("misaligned direction inputs")
    return actual > prev, predicted > prev


def _bools(actual_up, predicted_up):
    a = np.asarray(actual_up, dtype=bool)
    p = np.asarray(predicted_up, dtype=bool)
    if a.shape != p.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {p.shape}")
    if a.size == 0:
        raise ValueError("empty input")
    return a, p


def accuracy(actual_up, predicted_up) -> float:
    a, p = _bools(actual_up, predicted_up)
    return float(np.mean(a == p))


def f1(actual_up, predicted_up) -> float:
    """F1 of the "up" class; 0 when precision + recall is 0 or undefined."""
    a, p = _bools(actual_up, predicted_up)
    tp = int(np.sum(a & p))
    fp = int(np.sum(~a & p))
    fn = int(np.sum(a & ~p))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class MetricRow:
    rmse: float
    smape: float
    accuracy: float
    f1: float

    def as_dict(self) -> dict:
        return asdict(self)


def score(series: ForecastSeries) -> MetricRow:
    up_a, up_p = directions(series)
    return MetricRow(rmse(series.actual, series.predicted), smape(series.actual, series.predicted),
                     accuracy(up_a, up_p), f1(up_a, up_p))


def aggregate(rows) -> MetricRow:
    """Unweighted mean of each metric; NaN entries (failed fits) are skipped."""
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to aggregate")
    out = {}
    for f in fields(MetricRow):
        vals = [getattr(r, f.name) for r in rows if not math.isnan(getattr(r, f.name))]
        out[f.name] = math.fsum(vals) / len(vals) if vals else math.nan
    return MetricRow(**out)


NAN_ROW = MetricRow(math.nan, math.nan, math.nan, math.nan)

# Table layout: (display name, column key)
MODEL_COLUMNS = (("CNN Individual", "individual"), ("ARIMA", "arima"), ("CNN Joint", "joint"))


def write_metrics_table_csv(averaged: dict, path) -> None:
    """One row per metric, one column per model (the Table 1 shape)."""
    models = [k for _, k in MODEL_COLUMNS if k in averaged]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", *models])
        for name in METRIC_NAMES:
            w.writerow([name, *(f"{getattr(averaged[m], name):.17g}" for m in models)])


def read_metrics_table_csv(path) -> dict:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    models = rows[0][1:]
    values = {r[0]: [float(v) for v in r[1:]] for r in rows[1:]}
    return {m: MetricRow(**{n: values[n][i] for n in METRIC_NAMES}) for i, m in enumerate(models)}


def render_table(averaged: dict) -> str:
    """Plain-text table with Value and Direction sections."""
    cols = [(title, key) for title, key in MODEL_COLUMNS if key in averaged]
    width = max(14, *(len(t) + 2 for t, _ in cols))
    head = f"{'':<8}" + "".join(f"{t:>{width}}" for t, _ in cols)
    rule = "-" * len(head)

    def line(label, name):
        return f"{label:<8}" + "".join(f"{getattr(averaged[k], name):>{width}.4f}" for _, k in cols)

    return "\n".join([
        rule, head, rule,
        "Value forecasts", line("RMSE", "rmse"), line("SMAPE", "smape"), rule,
        "Direction forecasts", line("Accuracy", "accuracy"), line("F1", "f1"), rule,
    ]) + "\n"
