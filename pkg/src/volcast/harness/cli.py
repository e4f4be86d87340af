"""Command-line entry point: ``volcast <command> [options]``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, DataError, VolcastError
from ..marketdata import generate_synthetic_panel, ingest_prices, volatility_series, write_volatility_csv
from . import experiment as exp
from .config import ExperimentConfig, derive_seed
from .report import emit_report, load_models, rerender, save_models

logger = logging.getLogger("volcast")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    p.add_argument("--allow-partial", action="store_true", help="tolerate failed ARIMA fits")
    p.add_argument("--print-config", action="store_true", help="echo the effective config and exit")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="volcast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_common()]

    p = sub.add_parser("featurize", parents=common, help="prices CSV -> volatility CSV")
    p.add_argument("prices", type=Path)
    p.add_argument("--max-missing", type=int)
    p = sub.add_parser("generate", parents=common, help="synthetic panel -> volatility CSV")
    p.add_argument("--n-series", type=int)
    p.add_argument("--n-days", type=int)
    p = sub.add_parser("train-cnn", parents=common, help="train the joint and individual CNNs")
    p.add_argument("--only", choices=("joint", "individual"))
    sub.add_parser("fit-arima", parents=common, help="auto-ARIMA per holdout stock")
    p = sub.add_parser("evaluate", parents=common, help="walk-forward evaluation of saved models")
    p.add_argument("--models", type=Path, help="model directory (default: <out>/models)")
    sub.add_parser("run", parents=common, help="full experiment")
    sub.add_parser("report", parents=common, help="re-render the metrics table from per-stock metrics")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    if args.allow_partial:
        changes["allow_partial"] = True
    data = {}
    if getattr(args, "n_series", None) is not None:
        data["n_series"] = args.n_series
    if getattr(args, "n_days", None) is not None:
        data["n_days"] = args.n_days
    if getattr(args, "max_missing", None) is not None:
        data["max_missing"] = args.max_missing
    if data:
        changes["data"] = dataclasses.replace(cfg.data, **data)
    return dataclasses.replace(cfg, **changes).validate()


def _dispatch(args) -> int:
    cfg = _config(args)
    if args.print_config:
        sys.stdout.write(cfg.to_yaml())
        return 0
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "featurize":
        panel = [volatility_series(p) for p in ingest_prices(args.prices, cfg.data.max_missing) if len(p) > 21]
        write_volatility_csv(panel, out / "volatility.csv")
        print(f"wrote {len(panel)} volatility series to {out / 'volatility.csv'}")
        return 0
    if args.command == "generate":
        d = cfg.data
        seed = d.seed if d.seed is not None else derive_seed(cfg.seed, "panel")
        panel = generate_synthetic_panel(d.n_series, d.n_days, seed, d.synthetic)
        write_volatility_csv(panel, out / "volatility.csv")
        print(f"wrote {len(panel)} synthetic series to {out / 'volatility.csv'}")
        return 0
    if args.command == "report":
        sys.stdout.write(rerender(out))
        return 0
    if args.command == "run":
        report = exp.run_experiment(cfg, out)
        sys.stdout.write(_summary(report))
        return 0

    prep = exp.prepare(cfg)
    if args.command == "train-cnn":
        joint = exp.train_joint(cfg, prep) if args.only != "individual" else None
        individual = ({t: exp.train_individual(cfg, prep, t) for t in prep.holdouts}
                      if args.only != "joint" else None)
        save_models(out, joint, individual)
        print(f"saved CNN weights under {out / 'models'}")
        return 0
    if args.command == "fit-arima":
        models = exp.fit_all_arima(cfg, prep)
        save_models(out, arima_models=models)
        print(f"fitted {len(models)} ARIMA models -> {out / 'models' / 'arima_models.csv'}")
        return 0
    if args.command == "evaluate":
        joint, individual, arima_models = load_models(args.models or out / "models", prep.holdouts,
                                                      cfg.arima.enabled)
        report = exp.evaluate(cfg, prep, joint, individual, arima_models)
        emit_report(report, out, cfg)
        sys.stdout.write(_summary(report))
        return 0
    raise ConfigError(f"unknown command {args.command}")


def _summary(report) -> str:
    from ..metrics import render_table

    return f"holdouts: {', '.join(report.metadata['holdouts'])}\n" + render_table(report.averaged)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except VolcastError as exc:
        print(f"volcast: {exc}", file=sys.stderr)
        return exc.exit_code
    except AssertionError as exc:
        print(f"volcast: audit failed: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
