"""Command-line entry point.

Exit codes: 0 success, 1 computation failure, 2 I/O or configuration failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import pipeline
from .arima import ArimaConvergenceError
from .config import ConfigError, PipelineConfig, load_config
from .ingest import ParseError

NEEDS = {
    "preprocess": ("results",),
    "attributes": ("results", "letters", "words"),
    "forecast": ("results",),
    "sensitivity": ("results",),
    "predict": ("results", "letters", "words"),
    "classify": ("results", "letters", "words"),
    "report": ("results",),
}


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--results", help="daily results file")
    common.add_argument("--letters", help="letter probability table")
    common.add_argument("--words", help="word frequency table")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="wordlestats",
                                     description="Wordle results statistics pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="clean the results file")
    sub.add_parser("attributes", parents=[common], help="FREQ/WIE/NRE for every word")
    p = sub.add_parser("forecast", parents=[common], help="ARIMA forecast with interval")
    p.add_argument("--target-date", help="ISO date to forecast")
    p.add_argument("--sweep", type=_floats, help="coefficient values, e.g. 0.3,0.35,0.4")
    p = sub.add_parser("sensitivity", parents=[common], help="leading-coefficient sweep")
    p.add_argument("--target-date", help="ISO date to forecast")
    p.add_argument("--values", type=_floats, help="coefficient values")
    for name, helptext in (("predict", "predict a word's try distribution"),
                           ("classify", "difficulty class of a word")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("word")
        p.add_argument("--retrain", action="store_true", help="ignore cached model files")
        if name == "predict":
            p.add_argument("--tolerance", type=float, help="accuracy tolerance, percentage points")
    sub.add_parser("report", parents=[common], help="dataset feature report")
    return parser


def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    paths = cfg.paths
    for key in ("out", "results", "letters", "words"):
        value = getattr(args, key, None)
        if value:
            paths = replace(paths, **{key: value})
    cfg = replace(cfg, paths=paths)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "target_date", None):
        cfg = replace(cfg, arima=replace(cfg.arima, target_date=args.target_date))
    if getattr(args, "tolerance", None) is not None:
        cfg = replace(cfg, gbrt=replace(cfg.gbrt, tolerance=args.tolerance))
    return cfg


def run(args) -> object:
    cfg = _apply_overrides(load_config(args.config), args)
    cfg.validate(NEEDS[args.command])
    cmd = args.command
    if cmd == "preprocess":
        return pipeline.cmd_preprocess(cfg)
    if cmd == "attributes":
        return pipeline.cmd_attributes(cfg)
    if cmd == "forecast":
        return pipeline.cmd_forecast(cfg, sweep=args.sweep)
    if cmd == "sensitivity":
        return pipeline.cmd_sensitivity(cfg, values=args.values)
    if cmd == "predict":
        return pipeline.cmd_predict(cfg, args.word, retrain=args.retrain)
    if cmd == "classify":
        return pipeline.cmd_classify(cfg, args.word, retrain=args.retrain)
    return pipeline.cmd_report(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run(args)
    except (FileNotFoundError, PermissionError, ParseError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, ArimaConvergenceError, ArithmeticError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, list) and result and isinstance(result[0], tuple):
        result = [list(r) for r in result]
    print(json.dumps(pipeline._clean_json(result), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
