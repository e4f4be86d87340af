"""Report files written by a run.

Under the output directory:

- ``metrics_table.csv`` / ``metrics_table.txt``: averaged metrics, one row
  per metric and one column per model, plus a plain-text rendering.
- ``per_stock_metrics.csv``: ``ticker,model,rmse,smape,accuracy,f1``.
- ``rmse_scores.csv``, ``accuracy_scores.csv``: ``ticker,<model>...``, the
  per-stock values behind the RMSE and accuracy bar charts.
- ``forecasts/<ticker>.csv``: ``date,actual,individual,joint[,arima]``.
- ``manifest.json``: config, seed, holdouts, timestamps, and a SHA-256 digest
  over every CSV above (timestamps are not part of the digest).

``save_models`` adds ``models/joint.tcn``, ``models/individual_<ticker>.tcn``,
``models/arima_models.csv`` and ``training/loss_<name>.csv``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import traceback
from pathlib import Path

import numpy as np

from .. import __version__
from ..arima import ArimaModel, ArimaOrder
from ..errors import DataError
from ..metrics import METRIC_NAMES, MetricRow, aggregate, render_table, write_metrics_table_csv
from ..tcn import TcnModel

REPORT_CSVS = ("metrics_table.csv", "per_stock_metrics.csv", "rmse_scores.csv", "accuracy_scores.csv")


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.17g}"


def _writer(path: Path):
    fh = path.open("w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def report_files(report) -> list[str]:
    """Relative paths :func:`emit_report` creates for ``report``."""
    files = [*REPORT_CSVS, "metrics_table.txt", "manifest.json"]
    files += [f"forecasts/{t}.csv" for t in sorted(report.forecasts)]
    return sorted(files)


def outputs_digest(out_dir) -> str:
    out_dir = Path(out_dir)
    h = hashlib.sha256()
    for path in sorted(out_dir.rglob("*.csv")):
        h.update(path.relative_to(out_dir).as_posix().encode("utf-8"))
        h.update(b"\0")
        h.update(path.read_bytes())
    return h.hexdigest()


def write_per_stock_csv(per_stock: dict, models, path) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(["ticker", "model", *METRIC_NAMES])
        for t in sorted(per_stock):
            for m in models:
                row = per_stock[t][m]
                w.writerow([t, m, *(_fmt(getattr(row, n)) for n in METRIC_NAMES)])


def read_per_stock_csv(path) -> dict:
    out: dict = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out.setdefault(rec["ticker"], {})[rec["model"]] = MetricRow(**{n: float(rec[n]) for n in METRIC_NAMES})
    return out


def _write_scores(per_stock, models, metric, path) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(["ticker", *models])
        for t in sorted(per_stock):
            w.writerow([t, *(_fmt(getattr(per_stock[t][m], metric)) for m in models)])


def emit_report(report, out_dir, cfg=None) -> list[Path]:
    out_dir = Path(out_dir)
    (out_dir / "forecasts").mkdir(parents=True, exist_ok=True)
    models = report.models
    write_metrics_table_csv(report.averaged, out_dir / "metrics_table.csv")
    (out_dir / "metrics_table.txt").write_text(render_table(report.averaged), encoding="utf-8")
    write_per_stock_csv(report.per_stock, models, out_dir / "per_stock_metrics.csv")
    _write_scores(report.per_stock, models, "rmse", out_dir / "rmse_scores.csv")
    _write_scores(report.per_stock, models, "accuracy", out_dir / "accuracy_scores.csv")
    fc_models = [m for m in ("individual", "joint", "arima") if m in models]
    for t, fc in sorted(report.forecasts.items()):
        fh, w = _writer(out_dir / "forecasts" / f"{t}.csv")
        with fh:
            w.writerow(["date", "actual", *fc_models])
            for i, d in enumerate(fc.dates):
                w.writerow([str(d), _fmt(fc.actual[i]), *(_fmt(fc.predicted[m][i]) for m in fc_models)])
    manifest = {
        "package_version": __version__,
        **report.metadata,
        "config": cfg.to_dict() if cfg is not None else None,
        "outputs_digest": outputs_digest(out_dir),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                                           encoding="utf-8")
    return [out_dir / f for f in report_files(report)]


def rerender(out_dir) -> str:
    """Rebuild the averaged table files from ``per_stock_metrics.csv``."""
    out_dir = Path(out_dir)
    try:
        per_stock = read_per_stock_csv(out_dir / "per_stock_metrics.csv")
    except OSError as exc:
        raise DataError(f"cannot read per-stock metrics in {out_dir}: {exc}") from exc
    if not per_stock:
        raise DataError(f"{out_dir}: per_stock_metrics.csv is empty")
    models = [m for m in ("individual", "arima", "joint") if all(m in r for r in per_stock.values())]
    averaged = {m: aggregate(per_stock[t][m] for t in sorted(per_stock)) for m in models}
    write_metrics_table_csv(averaged, out_dir / "metrics_table.csv")
    text = render_table(averaged)
    (out_dir / "metrics_table.txt").write_text(text, encoding="utf-8")
    return text


# ---------------------------------------------------------------------------
# models

ARIMA_FIELDS = ("ticker", "p", "d", "q", "mean", "ar", "ma", "sigma2", "aic", "n_obs")


def write_arima_report(models: dict, path) -> None:
    """One row per stock; ``ar``/``ma`` are space-separated coefficients."""
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(ARIMA_FIELDS)
        for t in sorted(models):
            m = models[t]
            w.writerow([t, m.order.p, m.order.d, m.order.q, _fmt(m.mean),
                        " ".join(_fmt(c) for c in m.ar), " ".join(_fmt(c) for c in m.ma),
                        _fmt(m.sigma2), _fmt(m.aic), m.n_obs])


def read_arima_report(path) -> dict:
    out = {}
    try:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                coefs = [np.array([float(c) for c in rec[k].split()]) for k in ("ar", "ma")]
                out[rec["ticker"]] = ArimaModel(
                    ArimaOrder(int(rec["p"]), int(rec["d"]), int(rec["q"])), coefs[0], coefs[1],
                    float(rec["mean"]), float(rec["sigma2"]), float(rec["aic"]), int(rec["n_obs"]))
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read ARIMA report {path}: {exc}") from exc
    return out


def save_models(out_dir, joint=None, individual=None, arima_models=None) -> None:
    out_dir = Path(out_dir)
    (out_dir / "models").mkdir(parents=True, exist_ok=True)
    (out_dir / "training").mkdir(parents=True, exist_ok=True)
    if joint is not None:
        joint.model.save(out_dir / "models" / "joint.tcn")
        joint.write_loss_history(out_dir / "training" / "loss_joint.csv")
    for t, res in sorted((individual or {}).items()):
        res.model.save(out_dir / "models" / f"individual_{t}.tcn")
        res.write_loss_history(out_dir / "training" / f"loss_individual_{t}.csv")
    if arima_models is not None:
        write_arima_report(arima_models, out_dir / "models" / "arima_models.csv")


def load_models(model_dir, holdouts, with_arima=True):
    model_dir = Path(model_dir)
    try:
        joint = TcnModel.load(model_dir / "joint.tcn")
        individual = {t: TcnModel.load(model_dir / f"individual_{t}.tcn") for t in holdouts}
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load CNN weights from {model_dir}: {exc}") from exc
    arima_models = read_arima_report(model_dir / "arima_models.csv") if with_arima else None
    return joint, individual, arima_models


def write_failure_manifest(out_dir, cfg, stage, exc, done, started) -> None:
    """Flush what finished before a failure, plus the error, for diagnosis."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        save_models(out_dir, done.get("joint"), done.get("individual"), done.get("arima"))
    except Exception:  # noqa: BLE001 - best effort while already failing
        pass
    payload = {"status": "failed", "stage": stage, "error": str(exc),
               "traceback": traceback.format_exception_only(type(exc), exc),
               "started_at": started, "config": cfg.to_dict()}
    (out_dir / "manifest.json").write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")
