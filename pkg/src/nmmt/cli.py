"""Command line entry point.

Subcommands: oracle-suite, compare, rates, alpha-control, equipartition (each
takes --config/--out, optional --seed and --jobs) and bench for the kernel
benchmark.  Exit codes: 0 success, 1 configuration/usage error, 2 runtime
failure threshold exceeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .harness import ConfigError, load_config, run_experiment

_EXPERIMENTS = ("oracle-suite", "compare", "rates", "alpha-control", "equipartition")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; the contract is 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nmmt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _EXPERIMENTS:
        cmd = sub.add_parser(name, help=f"run the {name} experiment")
        cmd.add_argument("--config", required=True, help="path to the JSON experiment config")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override the config master seed")
        cmd.add_argument("--jobs", type=int, default=None,
                         help="worker processes (falls back to NMMT_JOBS, then the config)")
    bench = sub.add_parser("bench", help="benchmark the compiled Gibbs kernel against the fallback")
    bench.add_argument("--m", type=int, default=50)
    bench.add_argument("--n", type=int, default=800)
    bench.add_argument("--iters", type=int, default=3000)
    bench.add_argument("--repeats", type=int, default=3)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench":
        from .benchmark import run_benchmark

        run_benchmark(m=args.m, n=args.n, iters=args.iters, repeats=args.repeats)
        return 0

    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.command:
            raise ConfigError(
                f"config declares experiment {cfg.experiment!r} but the subcommand is {args.command!r}"
            )
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        jobs = args.jobs
        if jobs is None and os.environ.get("NMMT_JOBS"):
            jobs = int(os.environ["NMMT_JOBS"])
        if jobs is not None:
            cfg = dataclasses.replace(cfg, jobs=jobs)
    except (ConfigError, ValueError) as exc:
        print(f"nmmt: config error: {exc}", file=sys.stderr)
        return 1

    try:
        summary = run_experiment(cfg, args.out)
    except ConfigError as exc:
        print(f"nmmt: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"nmmt: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

    n_failed = summary.get("bookkeeping", {}).get("n_failed", 0)
    if n_failed > cfg.max_failures:
        print(
            f"nmmt: {n_failed} replicate failures exceed the allowed {cfg.max_failures}",
            file=sys.stderr,
        )
        return 2
    print(f"nmmt: {args.command} finished; outputs in {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
