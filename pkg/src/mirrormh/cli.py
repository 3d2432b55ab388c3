"""Command-line entry point for the experiment runner.

Exit codes: 0 on success, 2 for configuration errors, 3 for data errors.
"""

import argparse
import sys

from .errors import ConfigError, DataError
from .experiments import EXPERIMENT_NAMES, load_config, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mirrormh",
        description="Run mirror-type Metropolis-Hastings experiments and emit CSV/JSON results.",
    )
    parser.add_argument("--config", default="", help="key = value config file")
    parser.add_argument(
        "--experiment",
        default="",
        help=f"one of: {', '.join(EXPERIMENT_NAMES)}",
    )
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--out", default="", help="output directory")
    parser.add_argument("--replicates", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None, help="worker processes")
    parser.add_argument("--preset", choices=["desk", "paper"], default=None)
    parser.add_argument(
        "--set",
        dest="extras",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for extra in args.extras:
        if "=" not in extra:
            print(f"error: --set expects KEY=VALUE, got {extra!r}", file=sys.stderr)
            return EXIT_CONFIG
        key, value = extra.split("=", 1)
        overrides[key.strip()] = value
    if args.experiment:
        overrides["experiment"] = args.experiment
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out:
        overrides["out_dir"] = args.out
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.preset is not None:
        overrides["preset"] = args.preset

    try:
        config = load_config(args.config, overrides)
        files = run_experiment(config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    for path in files:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
