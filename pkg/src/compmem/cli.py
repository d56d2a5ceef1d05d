"""Command-line driver: ``compmem run`` and ``compmem validate``.

Exit status is 0 on success, 1 when a run violates an invariant or a
configured check, and 2 for usage, configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import ConfigError, apply_overrides, load_recipe, validate_config
from .recipes import RecipeFailure, run_recipe

log = logging.getLogger("compmem")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compmem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"compmem {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment recipe (TOML) or replay a manifest (JSON)")
    run_p.add_argument("--recipe", required=True, help="recipe TOML or manifest.json")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed", type=_u64, help="override the recipe seed")
    run_p.add_argument("--workers", type=_positive, default=1, help="worker threads for device updates")
    run_p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a recipe key, e.g. engine.replicas=4 (repeatable)")

    val_p = sub.add_parser("validate", help="check device files and recipes")
    val_p.add_argument("paths", nargs="+")
    return parser


def _cmd_run(args) -> int:
    recipe = apply_overrides(load_recipe(args.recipe), args.overrides)
    if args.seed is not None:
        recipe["seed"] = args.seed
    try:
        metrics = run_recipe(recipe, args.out, workers=args.workers)
    except RecipeFailure as exc:
        print(f"compmem: check failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"{recipe['kind']}: artifacts in {args.out}")
    for key in ("classification", "agreement_rate", "relative_l2_error", "mismatches", "increasing_in_current"):
        if key in metrics and metrics[key] is not None:
            value = metrics[key]
            if isinstance(value, dict):
                value = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                                  for k, v in value.items())
            print(f"  {key}: {value}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    report = validate_config(args.paths)
    for v in report:
        print(v)
    if not report:
        print(f"{len(args.paths)} file(s) valid")
    return EXIT_OK if not report else EXIT_FAILURE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_validate(args)
    except ConfigError as exc:
        print(f"compmem: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"compmem: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
