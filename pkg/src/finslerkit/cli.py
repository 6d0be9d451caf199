"""Command line entry point.

`finslerkit run config.json [--out DIR] [--seed N] [--tol-scale X]`
executes one scenario; exit code 0 on all checks passing, 1 on a check
failure or numerical failure, 2 on configuration problems.
`finslerkit catalog [filter]` prints the registry; `finslerkit bench`
times the compiled kernels against the pure-numpy fallback.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="finslerkit",
        description="Finsler geometry property suites and experiments",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario config")
    run.add_argument("config", help="path to a JSON scenario config")
    run.add_argument("--out", default=None, help="output directory for the "
                     "report and artifacts (overrides the config)")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    run.add_argument("--tol-scale", type=float, default=None,
                     help="multiply all check thresholds")

    cat = sub.add_parser("catalog", help="list families, operations, suites")
    cat.add_argument("filter", nargs="?", default=None,
                     help="substring filter")

    bench = sub.add_parser("bench", help="compare compiled and fallback kernels")
    bench.add_argument("--batch", type=int, default=200,
                       help="problem instances per kernel")
    bench.add_argument("--out", default=None, help="write the timing table "
                       "to this JSON file")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        from .harness import run_scenario

        try:
            report = run_scenario(
                args.config, out_dir=args.out, seed=args.seed,
                tol_scale=args.tol_scale,
            )
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        print(report.summary())
        return 0 if report.passed else 1

    if args.command == "catalog":
        from .harness import list_catalog

        print(json.dumps(list_catalog(args.filter), sort_keys=True, indent=2))
        return 0

    if args.command == "bench":
        from .benchmark import run_benchmark

        table = run_benchmark(batch=args.batch)
        text = json.dumps(table, sort_keys=True, indent=2)
        print(text)
        if args.out is not None:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        return 0

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
