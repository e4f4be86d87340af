"""Individual vs joint CNN vs auto-ARIMA experiment.

Stages: load the volatility panel, pick holdout stocks, build datasets, train
one joint CNN (non-holdout stocks) and one CNN per holdout, fit auto-ARIMA
per holdout on its training period, then forecast every test date one step
ahead from realized history and score the forecasts.
"""
from __future__ import annotations

import datetime as _dt
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import arima as arima_mod
from ..errors import ConfigError, DataError, NumericalError, StageError, VolcastError
from ..marketdata import (DatasetBundle, SplitSpec, VolatilitySeries, build_datasets, generate_synthetic_panel,
                          ingest_prices, read_volatility_csv, volatility_series)
from ..metrics import NAN_ROW, ForecastSeries, MetricRow, aggregate, score
from ..tcn import BACKEND, TcnModel, TrainConfig, TrainResult, train
from .config import ExperimentConfig, derive_seed

logger = logging.getLogger(__name__)

MODEL_KEYS = ("individual", "arima", "joint")


def select_holdouts(tickers, count: int, seed: int) -> tuple:
    """Uniform sample of ``count`` tickers without replacement, sorted."""
    pool = sorted(set(tickers))
    if count > len(pool):
        raise ConfigError(f"cannot hold out {count} of {len(pool)} tickers")
    rng = np.random.default_rng(seed)
    return tuple(sorted(rng.choice(pool, size=count, replace=False).tolist()))


def load_panel(cfg: ExperimentConfig) -> list[VolatilitySeries]:
    d = cfg.data
    if d.source == "synthetic":
        seed = d.seed if d.seed is not None else derive_seed(cfg.seed, "panel")
        return generate_synthetic_panel(d.n_series, d.n_days, seed, d.synthetic)
    if d.source == "volatility":
        return read_volatility_csv(d.path)
    panel = []
    for prices in ingest_prices(d.path, d.max_missing):
        if len(prices) < 22:
            logger.warning("%s: too few prices for a volatility estimate; skipped", prices.ticker)
            continue
        panel.append(volatility_series(prices))
    return panel


@dataclass
class Prepared:
    panel: dict
    holdouts: tuple
    bundle: DatasetBundle


def prepare(cfg: ExperimentConfig, panel=None) -> Prepared:
    try:
        panel = load_panel(cfg) if panel is None else panel
    except VolcastError:
        raise
    except (OSError, ValueError) as exc:
        raise StageError("data", None, DataError(str(exc))) from exc
    if len(panel) <= cfg.holdout_count:
        raise ConfigError(f"panel has {len(panel)} series; need more than holdout_count={cfg.holdout_count}")
    holdouts = select_holdouts([s.ticker for s in panel], cfg.holdout_count, derive_seed(cfg.seed, "holdouts"))
    split = SplitSpec(cfg.train_fraction, frozenset(holdouts), cfg.seed)
    bundle = build_datasets(panel, split, cfg.cnn.window)
    audit_no_leakage(bundle)
    return Prepared({s.ticker: s for s in panel}, holdouts, bundle)


def audit_no_leakage(bundle: DatasetBundle) -> None:
    leaked = set(bundle.joint_train.tickers.tolist()) & set(bundle.holdouts)
    if leaked:
        raise AssertionError(f"holdout tickers in joint training set: {sorted(leaked)}")
    if bundle.joint_train.end_dates.max() >= bundle.cut_date:
        raise AssertionError("joint training window ends after the train/test cut")


def _train_config(cfg: ExperimentConfig, *labels) -> TrainConfig:
    c = cfg.cnn
    return TrainConfig(epochs=c.epochs, batch_size=c.batch_size, seed=derive_seed(cfg.seed, *labels, "shuffle"),
                       target=c.target, shuffle_each_epoch=c.shuffle_each_epoch, rho=c.rho, epsilon=c.epsilon)


def _new_model(cfg: ExperimentConfig, *labels) -> TcnModel:
    c = cfg.cnn
    return TcnModel.standard(seed=derive_seed(cfg.seed, *labels, "init"), filters=c.filters, kernel=c.kernel,
                             n_hidden=c.n_hidden, input_length=c.window)


def train_joint(cfg: ExperimentConfig, prep: Prepared) -> TrainResult:
    logger.info("training joint CNN on %d windows", len(prep.bundle.joint_train))
    return train(_new_model(cfg, "joint"), prep.bundle.joint_train, _train_config(cfg, "joint"))


def train_individual(cfg: ExperimentConfig, prep: Prepared, ticker: str) -> TrainResult:
    ds = prep.bundle.individual_train[ticker]
    logger.info("training individual CNN for %s on %d windows", ticker, len(ds))
    return train(_new_model(cfg, "individual", ticker), ds, _train_config(cfg, "individual", ticker))


def fit_arima(cfg: ExperimentConfig, series: VolatilitySeries, cut_date) -> arima_mod.ArimaModel:
    """Auto-ARIMA on the raw volatility observed before ``cut_date``."""
    history = series.values[series.dates < cut_date]
    a = cfg.arima
    return arima_mod.auto_arima(history, a.max_p, a.max_q, a.max_d, name=series.ticker)


@dataclass
class StockForecasts:
    ticker: str
    dates: np.ndarray
    actual: np.ndarray
    previous: np.ndarray
    predicted: dict = field(default_factory=dict)

    def series(self, model: str) -> ForecastSeries:
        return ForecastSeries(self.ticker, self.dates, self.actual, self.predicted[model], self.previous)


@dataclass
class EvaluationReport:
    per_stock: dict
    averaged: dict
    forecasts: dict
    metadata: dict
    arima_models: dict = field(default_factory=dict)

    @property
    def models(self) -> list[str]:
        return [m for m in MODEL_KEYS if m in self.averaged]


def cnn_forecasts(model: TcnModel, dataset) -> np.ndarray:
    """Raw-scale next-step forecasts for every window of a test dataset."""
    out, _ = model.forward(dataset.inputs)
    return dataset.destandardize(out[:, -1])


def audit_walk_forward(series: VolatilitySeries, forecasts: StockForecasts, window: int) -> None:
    """Every forecast dated t uses inputs dated strictly before t."""
    idx = np.searchsorted(series.dates, forecasts.dates)
    if not np.array_equal(series.dates[idx], forecasts.dates):
        raise AssertionError(f"{series.ticker}: forecast dates not on the series calendar")
    if np.any(idx < window):
        raise AssertionError(f"{series.ticker}: forecast without a full input window")
    if np.any(series.dates[idx - 1] >= forecasts.dates):
        raise AssertionError(f"{series.ticker}: forecast uses same-day or later data")


def evaluate(cfg: ExperimentConfig, prep: Prepared, joint: TcnModel, individual: dict,
             arima_models: dict | None) -> EvaluationReport:
    bundle = prep.bundle
    per_stock, forecasts = {}, {}
    for t in prep.holdouts:
        stage = "evaluate"
        try:
            series = prep.panel[t]
            jt, it = bundle.joint_test[t], bundle.individual_test[t]
            if not np.array_equal(jt.end_dates, it.end_dates):
                raise AssertionError("joint and individual test windows disagree")
            idx = np.searchsorted(series.dates, jt.end_dates)
            fc = StockForecasts(t, jt.end_dates, series.values[idx], series.values[idx - 1])
            fc.predicted["individual"] = cnn_forecasts(individual[t], it)
            fc.predicted["joint"] = cnn_forecasts(joint, jt)
            if arima_models is not None:
                stage = "arima-forecast"
                model = arima_models.get(t)
                fc.predicted["arima"] = (arima_mod.rolling_forecasts(model, series.values, int(idx[0]))
                                         if model is not None else np.full(idx.size, math.nan))
            audit_walk_forward(series, fc, cfg.cnn.window)
            for k, v in fc.predicted.items():
                if not np.all(np.isfinite(v)) and not (k == "arima" and cfg.allow_partial):
                    raise StageError(stage, t, NumericalError(f"non-finite {k} forecasts"))
        except StageError:
            raise
        except (VolcastError, ValueError, ArithmeticError) as exc:
            raise StageError(stage, t, exc) from exc
        forecasts[t] = fc
        per_stock[t] = {k: (score(fc.series(k)) if np.all(np.isfinite(fc.predicted[k])) else NAN_ROW)
                        for k in MODEL_KEYS if k in fc.predicted}
    models = [m for m in MODEL_KEYS if all(m in row for row in per_stock.values())]
    averaged = {m: aggregate(per_stock[t][m] for t in prep.holdouts) for m in models}
    metadata = {
        "seed": cfg.seed,
        "config_digest": cfg.digest(),
        "holdouts": list(prep.holdouts),
        "cut_date": str(bundle.cut_date),
        "joint_train_windows": len(bundle.joint_train),
        "joint_train_tickers": len(set(bundle.joint_train.tickers.tolist())),
        "backend": BACKEND,
    }
    return EvaluationReport(per_stock, averaged, forecasts, metadata, dict(arima_models or {}))


def fit_all_arima(cfg: ExperimentConfig, prep: Prepared) -> dict:
    out = {}
    for t in prep.holdouts:
        try:
            out[t] = fit_arima(cfg, prep.panel[t], prep.bundle.cut_date)
        except VolcastError as exc:
            if not cfg.allow_partial:
                raise StageError("fit-arima", t, exc) from exc
            logger.warning("%s: ARIMA fit failed (%s); continuing with --allow-partial", t, exc)
    return out


def run_experiment(cfg: ExperimentConfig, out_dir=None, panel=None) -> EvaluationReport:
    """Full experiment; with ``out_dir`` also persists models, loss histories
    and the report files (see :func:`volcast.harness.report.emit_report`)."""
    from .report import emit_report, save_models, write_failure_manifest

    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    stage, done = "prepare", {}
    try:
        prep = prepare(cfg, panel)
        stage = "train-joint"
        joint = train_joint(cfg, prep)
        done["joint"] = joint
        individual = {}
        for t in prep.holdouts:
            stage = f"train-individual:{t}"
            individual[t] = train_individual(cfg, prep, t)
        done["individual"] = individual
        stage = "fit-arima"
        arima_models = fit_all_arima(cfg, prep) if cfg.arima.enabled else None
        done["arima"] = arima_models
        stage = "evaluate"
        report = evaluate(cfg, prep, joint.model, {t: r.model for t, r in individual.items()}, arima_models)
    except Exception as exc:
        if out_dir is not None:
            write_failure_manifest(out_dir, cfg, stage, exc, done, started)
        if isinstance(exc, (StageError, ConfigError)):
            raise
        if isinstance(exc, VolcastError):
            raise StageError(stage, getattr(exc, "ticker", None), exc) from exc
        raise
    report.metadata["final_loss"] = {"joint": float(joint.loss_history[-1]),
                                     **{t: float(r.loss_history[-1]) for t, r in individual.items()}}
    report.metadata["started_at"] = started
    report.metadata["finished_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    if out_dir is not None:
        save_models(out_dir, joint, individual, arima_models)
        emit_report(report, out_dir, cfg)
    return report
