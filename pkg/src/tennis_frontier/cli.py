"""Command-line entry point: ``tennis-frontier <stage> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, default_config_text, load_config, parse_epsilons
from .pipeline import DataError, Pipeline, StageDependencyError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEPENDENCY = 4

COMMANDS = ("ingest", "fit", "frontier", "metrics", "stats", "report", "simulate", "all", "show-config")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tennis-frontier",
        description="Markov game model, Pareto frontiers and efficiency metrics from point-by-point data.",
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI configuration file (built-in defaults when omitted)")
    ap.add_argument("--profile", choices=("full", "reduced"), help="optimisation profile")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for per-player/per-seed work")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--force", action="store_true", help="rerun stages even when their manifest is current")
    ap.add_argument("--players", help="first N players, or comma-separated player names")
    ap.add_argument("--epsilon", help="comma-separated constraint widths; the first is the primary run")
    ap.add_argument("--data-dir", help="override data_dir")
    ap.add_argument("--out-dir", help="override out_dir")
    ap.add_argument("--min-matches", type=int, help="override the per-player match threshold")
    ap.add_argument("--games", type=int, default=1_000_000, help="games per strategy for 'simulate'")
    ap.add_argument("--write-corpus", metavar="DIR", help="'simulate' also writes a synthetic corpus here")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "show-config":
        sys.stdout.write(default_config_text())
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        cfg = cfg.with_overrides(
            profile=args.profile,
            seed=args.seed,
            players=args.players,
            epsilons=parse_epsilons(args.epsilon) if args.epsilon else None,
            data_dir=args.data_dir,
            out_dir=args.out_dir,
            min_matches=args.min_matches,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("config error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG

    pipe = Pipeline(cfg, jobs=args.jobs, force=args.force)
    try:
        if args.command == "simulate":
            results = [pipe.simulate(args.games, args.write_corpus)]
        elif args.command == "all":
            results = pipe.run_all()
        else:
            results = [pipe.run(args.command)]
    except StageDependencyError as exc:
        print(f"stage dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in results:
        state = "up to date" if r.skipped else f"wrote {len(r.outputs)} files"
        print(f"{r.stage}: {state}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
