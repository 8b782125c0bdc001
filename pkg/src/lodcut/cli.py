"""Command line entry point: ``lodcut run`` and ``lodcut check``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from . import __version__
from .acceptance import CRITERIA, resolve, run_criterion
from .config import ConfigError, load_config
from .experiments import run_experiment

WORKERS_ENV = "LODCUT_WORKERS"
log = logging.getLogger("lodcut")


def _workers(cli_value: int | None, config_value: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return cli_value if cli_value is not None else config_value


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    cfg = dataclasses.replace(cfg, workers=_workers(args.workers, cfg.workers))
    out = args.out or cfg.out
    log.info("running %s -> %s (workers=%d)", cfg.experiment, out, cfg.workers)
    report = run_experiment(cfg, out, args.dump_matrices)
    sys.stdout.write(report.csv_text())
    if report.summary:
        sys.stdout.write(report.summary_text())
    return 0


def cmd_check(args) -> int:
    try:
        numbers = resolve(args.criterion)
    except KeyError:
        names = ", ".join(f"{n}/{slug}" for n, (slug, _) in CRITERIA.items())
        print(f"unknown criterion {args.criterion!r}; choose from: all, {names}", file=sys.stderr)
        return 2
    ok = True
    for num in numbers:
        res = run_criterion(num)
        print(res.line(), flush=True)
        ok &= res.passed is not False
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lodcut", description=__doc__)
    p.add_argument("--version", action="version", version=f"lodcut {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a config file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config 'out')")
    r.add_argument("--workers", type=int, help=f"parallel sweep points (env {WORKERS_ENV} overrides)")
    r.add_argument("--dump-matrices", action="store_true", help="write Matrix Market files per sweep point")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run an acceptance criterion; exit 0 on pass")
    c.add_argument("criterion", help="number 1-10, its name, or 'all'")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as err:
        print(f"lodcut: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
