"""Command-line entry point: ``forecastbench {run,grid,version}``."""
import argparse
import hashlib
import logging
import os
import sys

from . import __version__
from .data import load_series, prepare
from .errors import ConfigError, ForecastError
from .models import MODEL_NAMES, save_weights
from .optimizers import KINDS
from .report import (atomic_write, emit_prediction_svg, history_csv, report_dict, summary_csv,
                     to_json)
from .trainer import TrainConfig, cell_config, run_cell, run_experiment_grid

log = logging.getLogger("forecastbench")

DEFAULT_SEED = 42


def _default_seed():
    env = os.environ.get("FORECAST_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"FORECAST_SEED must be an integer, got {env!r}") from None


def _names(values, valid, what):
    out = []
    for v in values:
        out.extend(x for x in v.split(",") if x)
    for x in out:
        if x not in valid:
            raise argparse.ArgumentTypeError(
                f"invalid {what} {x!r}; valid: {', '.join(valid)}")
    return out


def _add_training_flags(p):
    p.add_argument("--data", required=True, help="CSV file with header date,close[,volume]")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--seed", type=int, default=None,
                   help=f"base seed (default: $FORECAST_SEED or {DEFAULT_SEED})")
    p.add_argument("--lstm-activation", choices=("relu", "tanh"), default="relu")
    p.add_argument("--max-restarts", type=int, default=4,
                   help="weight redraws allowed after a dead or degenerate fit (0 disables)")
    p.add_argument("--use-volume", action="store_true",
                   help="feed (close, volume) pairs instead of close only")
    p.add_argument("--out", default="out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="forecastbench",
                                     description="Next-step forecasting benchmark.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate one model/optimizer pair")
    _add_training_flags(run)
    run.add_argument("--model", required=True, choices=MODEL_NAMES)
    run.add_argument("--optimizer", required=True, choices=KINDS)
    run.add_argument("--save-weights", action="store_true",
                     help="also write the retrained model to weights.bin")

    grid = sub.add_parser("grid", help="evaluate the model x optimizer grid")
    _add_training_flags(grid)
    grid.add_argument("--models", nargs="+", default=[",".join(MODEL_NAMES)])
    grid.add_argument("--optimizers", nargs="+", default=[",".join(KINDS)])
    grid.add_argument("--parallel", type=int, default=1)

    sub.add_parser("version", help="print the tool version")
    return parser


def _config(args, seed):
    return TrainConfig(batch_size=args.batch_size, patience=args.patience,
                       max_epochs=args.max_epochs, seed=seed,
                       lstm_activation=args.lstm_activation, max_restarts=args.max_restarts)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(args, command, cfg, **selection):
    return {
        "schema": 1,
        "tool": "forecastbench",
        "version": __version__,
        "command": command,
        "input": {"path": os.path.abspath(args.data), "sha256": _sha256(args.data)},
        "use_volume": args.use_volume,
        "output_dir": os.path.abspath(args.out),
        "config": cfg.to_dict(),
        **selection,
    }


def _write_cell(directory, report, normalizer):
    if report.history is not None:
        atomic_write(os.path.join(directory, "history.csv"), history_csv(report.history))
    atomic_write(os.path.join(directory, "report.json"), to_json(report_dict(report, normalizer)))
    if report.test_predictions is not None:
        emit_prediction_svg(report.test_targets, report.test_predictions,
                            os.path.join(directory, "prediction.svg"),
                            title=f"{report.model} / {report.optimizer}: predicted vs actual "
                                  "(normalized)")


def cmd_run(args):
    base = args.seed if args.seed is not None else _default_seed()
    cfg = cell_config(_config(args, base), args.model, args.optimizer)
    series = load_series(args.data)
    prepared = prepare(series, use_volume=args.use_volume)
    manifest = _manifest(args, "run", cfg, base_seed=base, model=args.model,
                         optimizer=args.optimizer)
    atomic_write(os.path.join(args.out, "manifest.json"), to_json(manifest))
    report = run_cell(prepared, args.model, cfg)
    _write_cell(args.out, report, prepared.normalizer)
    if args.save_weights and report.error is None:
        save_weights(report.trained, os.path.join(args.out, "weights.bin"))
    if report.error:
        print(f"error: {report.error}", file=sys.stderr)
        return 1
    print(f"{report.model} {report.optimizer}: val_mae={report.val_mae:.6g} "
          f"test_mae={report.test_mae:.6g} epochs={report.epochs}")
    return 0


def cmd_grid(args):
    base = args.seed if args.seed is not None else _default_seed()
    models = _names(args.models, MODEL_NAMES, "model")
    opts = _names(args.optimizers, KINDS, "optimizer")
    if args.parallel < 1:
        raise ConfigError("--parallel must be >= 1")
    cfg = _config(args, base)
    series = load_series(args.data)
    manifest = _manifest(args, "grid", cfg, models=models, optimizers=opts,
                         cell_seeds={f"{m}-{o}": cell_config(cfg, m, o).seed
                                     for m in models for o in opts})
    atomic_write(os.path.join(args.out, "manifest.json"), to_json(manifest))
    reports = run_experiment_grid(series, models, opts, cfg, parallel=args.parallel,
                                  use_volume=args.use_volume)
    normalizer = prepare(series, use_volume=args.use_volume).normalizer
    for r in reports:
        _write_cell(os.path.join(args.out, "cells", f"{r.model}-{r.optimizer}"), r, normalizer)
        if r.error:
            log.warning("%s/%s: %s", r.model, r.optimizer, r.error)
    atomic_write(os.path.join(args.out, "summary.csv"), summary_csv(reports))
    atomic_write(os.path.join(args.out, "summary.json"),
                 to_json({"schema": 1, "cells": [report_dict(r) | {"test": None}
                                                 for r in reports]}))
    sys.stdout.write(summary_csv(reports))
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "version":
        print(f"forecastbench {__version__}")
        return 0
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_grid(args)
    except (ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"forecastbench: error: {exc}", file=sys.stderr)
        return 2
    except ForecastError as exc:
        print(f"forecastbench: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"forecastbench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
