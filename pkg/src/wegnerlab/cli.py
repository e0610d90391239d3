"""Command-line entry point: ``run``, ``validate`` and ``report``."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .harness import ConfigError, load_config, rerender, run
from .spectral import SpectralError
from .wegner import RunError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wegnerlab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute an experiment")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--out")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    rep = sub.add_parser("report", help="re-render report.txt from records.jsonl")
    rep.add_argument("run_dir")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.estimator} config {cfg.config_hash()[:12]}")
        elif args.command == "run":
            outdir = run(args.config, seed=args.seed, workers=args.workers, out=args.out)
            sys.stdout.write((outdir / "report.txt").read_text())
        else:
            sys.stdout.write(rerender(args.run_dir))
    except ValueError as exc:  # ConfigError and KernelError included
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RunError, SpectralError, OSError) as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return 1
    return 0
