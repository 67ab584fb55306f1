"""Command line front end.

Verbs:
  synth         sample the three-task dataset, fit candidate + baselines, report MAE
  compare       same protocol on an arbitrary data source (CSV or synthetic)
  fit           train one kernel and persist the model as JSON
  predict       evaluate a saved model at new inputs
  inspect-init  dump periodogram and fitted mixture without training

``MTGP_LOG`` sets the log level (DEBUG, INFO, WARNING, ...).  Exit status
is 0 only when everything requested completed.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from . import __version__
from . import experiment as ex

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtgp", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"mtgp {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--kernel", help="override candidate kernel family")
        p.add_argument("--q", type=int, help="override number of spectral components")
        p.add_argument("--out", help="override output directory")

    common(sub.add_parser("synth", help="synthetic three-task experiment"))
    common(sub.add_parser("compare", help="multi-kernel comparison on any data source"))
    common(sub.add_parser("fit", help="train a single kernel"))
    common(sub.add_parser("inspect-init", help="dump periodogram and mixture fit"))

    predict = sub.add_parser("predict", help="evaluate a saved model")
    predict.add_argument("model", help="model JSON written by fit")
    predict.add_argument("inputs", help="CSV with header task,x")
    predict.add_argument("--out", default="predictions.csv", help="output CSV path")
    return parser


def _load(args) -> ex.ExperimentConfig:
    config = ex.load_config(args.config) if args.config else ex.ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.kernel is not None:
        overrides["kernel"] = args.kernel
    if args.q is not None:
        overrides["q"] = args.q
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _run(args) -> None:
    if args.verb == "predict":
        out = ex.run_predict(args.model, args.inputs, args.out)
        log.info("wrote %s", out)
        return
    config = _load(args)
    if args.verb == "synth":
        if config.data.get("source") != "synthetic":
            raise ex.ConfigError("synth requires data.source 'synthetic'; use compare for CSV data")
        ex.run_experiment(config)
    elif args.verb == "compare":
        ex.run_experiment(config)
    elif args.verb == "fit":
        ex.run_fit(config)
    elif args.verb == "inspect-init":
        ex.run_inspect_init(config)


def main(argv=None) -> int:
    level = os.environ.get("MTGP_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        _run(args)
    except Exception as exc:  # the CLI boundary turns failures into exit codes
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
