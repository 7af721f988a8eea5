"""``iccsim`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .code import CodeError, generate_codebook
from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("iccsim")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iccsim", description="Pilot-aware attack identification simulator")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, type=Path, help="INI experiment file")
    parser.add_argument("--seed", type=int, help="override [run] seed")
    parser.add_argument("--trials", type=int, help="override [run] trials")
    parser.add_argument("--out", type=Path, help="override [run] output CSV path")
    parser.add_argument("--threads", type=int, help="worker threads (default: $ICCSIM_THREADS or config)")
    parser.add_argument("--emit-codebook", type=Path, metavar="PATH",
                        help="also write the scenario codebook in text form")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _env_threads() -> int | None:
    raw = os.environ.get("ICCSIM_THREADS")
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"ICCSIM_THREADS must be an integer, got {raw!r}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        threads = args.threads if args.threads is not None else _env_threads()
        cfg = cfg.with_overrides(experiment=args.experiment, seed=args.seed, trials=args.trials,
                                 output=str(args.out) if args.out else None, threads=threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.emit_codebook:
            book = generate_codebook(cfg.scenario.n_b, cfg.scenario.taps)
            args.emit_codebook.write_text(book.to_text(), encoding="utf-8")
        log.info("running %s with %d trials, seed %d", cfg.experiment, cfg.trials, cfg.seed)
        table = run_experiment(cfg)
        table.write(cfg.run.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CodeError, ValueError, OSError, ArithmeticError, MemoryError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("wrote %d rows to %s", len(table.rows), cfg.run.output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
