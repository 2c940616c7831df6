"""Command line entry point: ``slsbounds <command> --config path [--seed-override k] [--out dir]``."""
from __future__ import annotations

import argparse
import json
import sys

from .config import COMMANDS, ConfigError, load_config
from .report import ManifestMismatch, compare_runs, to_plain
from .runner import EXIT_ERROR, EXIT_OK, EXIT_VIOLATION, THREADS_ENV, run


def build_parser():
    ap = argparse.ArgumentParser(
        prog="slsbounds",
        description=f"Certified Laplace and pMLE bounds. Seed sweeps use {THREADS_ENV} threads.")
    sub = ap.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sp = sub.add_parser(c)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed-override", type=int)
        sp.add_argument("--out")
    cp = sub.add_parser("compare", help="diff two run directories")
    cp.add_argument("dir_a")
    cp.add_argument("dir_b")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            diff = compare_runs(args.dir_a, args.dir_b)
            print(json.dumps(to_plain(diff), indent=1, sort_keys=True))
            return EXIT_OK if diff["identical"] else EXIT_VIOLATION
        cfg = load_config(args.config, args.command, args.seed_override, args.out)
        code = run(cfg)
    except (ConfigError, ManifestMismatch) as e:
        print(str(e), file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:  # noqa: BLE001 - any failure maps to the error exit code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.command}: {'all certificates hold' if code == EXIT_OK else 'violations'}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
