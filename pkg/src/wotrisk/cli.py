"""Command-line entry point: ``wotrisk <experiment> [--config PATH] [--seed N] ...``.

Exit codes: 0 success, 2 config error, 3 numerical abort, 4 infeasible quotes.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, ConfigError, load_file, resolve
from .experiments import RUNNERS
from .neural import NumericalAbort

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_INFEASIBLE = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON or key=value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (default: out/<experiment>)")
    common.add_argument("--reproducible", action="store_true",
                        help="deterministic run; recorded in the echoed config")
    common.add_argument("--epochs", type=int, help="training epochs override")
    common.add_argument("-q", "--quiet", action="store_true", help="only report errors")

    parser = argparse.ArgumentParser(prog="wotrisk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        user = load_file(args.config) if args.config else {}
        if args.epochs is not None and args.epochs <= 0:
            raise ConfigError("--epochs must be positive")
        cfg = resolve(args.experiment, user, seed=args.seed, epochs=args.epochs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg["reproducible"] = bool(args.reproducible)
    out = args.out or f"out/{args.experiment}"
    try:
        result = RUNNERS[args.experiment](cfg, out)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.experiment == "moment-bounds" and result["status"] == "infeasible":
        print("infeasible: no measure matches the quoted intervals", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
