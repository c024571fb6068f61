"""Command-line entry point.

    ergoswarm run <cfg> [--out DIR]
    ergoswarm sweep <cfg> --axis swarm.r_comm --values 1,5,global [--out DIR]
    ergoswarm compare <cfg> [--out DIR]
    ergoswarm plot <dir>

Exit codes: 0 ok, 1 configuration error, 2 runtime error. Failures print one
JSON line prefixed with ``error:`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import experiments
from .config import load_config
from .errors import ConfigError, ErgoswarmError
from .plotting import PlotError, plot_artifacts

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _error(kind: str, message: str, **extra) -> None:
    print("error: " + json.dumps({"kind": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)


def parse_values(text: str) -> list:
    """Comma-separated sweep values, each parsed as a YAML scalar (``10``, ``2.5``, ``global``)."""
    return [yaml.safe_load(v.strip()) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergoswarm", description="Decentralized ergodic coverage simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every seed of a config")
    p.add_argument("config")
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="run a config across values of one parameter")
    p.add_argument("config")
    p.add_argument("--axis", required=True, help="dotted config path, e.g. swarm.r_comm (or 'tau' for both periods)")
    p.add_argument("--values", required=True, type=parse_values)
    p.add_argument("--out")

    p = sub.add_parser("compare", help="ergodic vs baseline planners on identical worlds")
    p.add_argument("config")
    p.add_argument("--out")

    p = sub.add_parser("plot", help="render PNG figures for an artifact directory")
    p.add_argument("artifact_dir")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "plot":
        try:
            for path in plot_artifacts(args.artifact_dir):
                print(path)
        except PlotError as exc:
            _error("PlotError", str(exc))
            return EXIT_RUNTIME
        return EXIT_OK

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _error("ConfigError", exc.message, field=exc.field)
        return EXIT_CONFIG
    except OSError as exc:
        _error("ConfigError", str(exc), field="<file>")
        return EXIT_CONFIG

    out = experiments.resolve_output(cfg, args.out)
    try:
        if args.command == "run":
            experiments.cmd_run(cfg, out)
        elif args.command == "sweep":
            experiments.cmd_sweep(cfg, out, args.axis, args.values)
        else:
            experiments.cmd_compare(cfg, out)
    except ConfigError as exc:
        _error("ConfigError", exc.message, field=exc.field)
        return EXIT_CONFIG
    except ErgoswarmError as exc:
        _error(type(exc).__name__, str(exc), step=getattr(exc, "step", None))
        return EXIT_RUNTIME
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
