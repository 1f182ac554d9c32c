"""Command-line entry point.

Subcommands: run <config> [--seed N] [--out DIR], list,
audit-kernel <family>, check-weight <expr> --p P --n N.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .harness import (ConfigError, ExperimentConfig, list_catalog, run,
                      run_config_file)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="morreylab",
                                 description="desk-scale parabolic harmonic "
                                             "analysis verification runs")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config (JSON)")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)

    sub.add_parser("list", help="print the catalog of presets")

    p_audit = sub.add_parser("audit-kernel", help="audit a kernel family")
    p_audit.add_argument("family", choices=["gaussian-jet"])
    p_audit.add_argument("--n", type=int, default=2)
    p_audit.add_argument("--order", type=int, default=10)

    p_weight = sub.add_parser("check-weight", help="check weight admissibility")
    p_weight.add_argument("expr", help="weight expression in r, t, xnorm")
    p_weight.add_argument("--p", type=float, required=True)
    p_weight.add_argument("--n", type=int, required=True)
    return ap


def _print_report(report) -> int:
    for c in report.checks:
        status = "PASS" if c["passed"] else "FAIL"
        tol = f" (tolerance {c['tolerance']})" if "tolerance" in c else ""
        print(f"[{status}] {c['name']}: {c['value']}{tol}")
    print("result:", "PASS" if report.passed else "FAIL",
          f"({report.wall_clock_s:.2f}s)")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            report = run_config_file(args.config, seed=args.seed, out_dir=args.out)
            return _print_report(report)
        if args.command == "list":
            print(list_catalog(), end="")
            return 0
        if args.command == "audit-kernel":
            config = ExperimentConfig(kind="kernel-audit",
                                      params={"n": args.n, "order": args.order})
            return _print_report(run(config))
        if args.command == "check-weight":
            config = ExperimentConfig(kind="weight-check",
                                      params={"n": args.n, "p": args.p,
                                              "weight": {"expr": args.expr}})
            return _print_report(run(config))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
