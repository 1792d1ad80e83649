"""Command-line entry point: ``topovar --scenario FILE --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from ._alloc import tune_allocator
from .errors import ScenarioError
from .scenario import KINDS, parse_scenario, run

log = logging.getLogger("topovar")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="topovar",
        description=f"Run a declarative experiment. Kinds: {', '.join(KINDS)}.",
    )
    p.add_argument("--scenario", required=True, help="YAML scenario file")
    p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps (default 1)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--check", action="store_true", help="validate and echo the resolved scenario, then exit")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"topovar {__version__}")
    return p


def main(argv=None) -> int:
    """Exit code 0 iff every assertion of the scenario passed; 2 for invalid input."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    tune_allocator()
    try:
        config = parse_scenario(args.scenario)
    except ScenarioError as exc:
        print("invalid scenario:", file=sys.stderr)
        for msg in exc.errors:
            print(f"  - {msg}", file=sys.stderr)
        return 2
    if args.check:
        json.dump(config.echo(), sys.stdout, indent=2, sort_keys=True, default=str)
        print()
        return 0
    try:
        status, summary = run(config, args.out, threads=args.threads, seed=args.seed)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for a in summary["assertions"]:
        log.info("%s %s value=%s", "PASS" if a["passed"] else "FAIL", a["name"], a["value"])
    if "error" in summary:
        print(f"{summary['error']['type']}: {summary['error']['message']}", file=sys.stderr)
    print(f"{config.kind}: {summary['status']} ({os.path.join(args.out, config.data['output']['json'])})")
    return status


if __name__ == "__main__":
    sys.exit(main())
