"""Command line entry point: ``cellshape run|sweep|check``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .driver import OptimConfig, b_sweep, run_optimization, split_override
from .errors import ConfigurationError, GeometryError

EXIT_OK, EXIT_CONFIG, EXIT_EARLY = 0, 1, 2


def _load_config(args) -> OptimConfig:
    overrides = list(args.set or [])
    env_out = os.environ.get("CELLSHAPE_OUT")
    if env_out:
        overrides.append(f"output_dir={env_out}")
    if args.config is None:
        return OptimConfig.from_pairs([split_override(o) for o in overrides])
    return OptimConfig.from_file(args.config, overrides)


def _parse_b_values(text):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad --b list {text!r}") from exc
    if not values or any(b <= 0 for b in values):
        raise ConfigurationError("--b needs a nonempty list of positive values")
    return values


def build_parser():
    p = argparse.ArgumentParser(prog="cellshape", description="Gradient-penalized shape optimization of cell inclusions.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp):
        sp.add_argument("config", nargs="?", help="flat 'key = value' configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a configuration key")

    run = sub.add_parser("run", help="run one optimization")
    add_config(run)
    sweep = sub.add_parser("sweep", help="run once per Frobenius bound b")
    sweep.add_argument("--b", required=True, help="comma separated b values")
    add_config(sweep)
    check = sub.add_parser("check", help="finite-difference check of the shape derivative")
    check.add_argument("--fields", type=int, default=10)
    check.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "check":
        from .verify import run_check

        return EXIT_OK if run_check(args.fields, args.seed) else EXIT_EARLY

    try:
        cfg = _load_config(args)
        if args.command == "run":
            result = run_optimization(cfg)
            print(f"{result.completed_steps} steps completed ({result.termination}); output in {cfg.output_dir}")
            if result.early_termination:
                print(f"early termination: {result.message}", file=sys.stderr)
                return EXIT_EARLY
            return EXIT_OK
        summaries = b_sweep(cfg, _parse_b_values(args.b))
        early = False
        for s in summaries:
            print(
                f"b={s.b:g}: {s.completed_steps} steps ({s.termination}), "
                f"quality max at step 10 {s.quality_max_at_10:.4g}, final max/median {s.quality_max_final:.4g}/{s.quality_median_final:.4g}"
            )
            early |= s.termination != "ok"
        return EXIT_EARLY if early else EXIT_OK
    except (ConfigurationError, GeometryError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
