"""Command-line entry point: one subcommand per task.

Every subcommand takes ``--config PATH`` plus optional ``--out DIR``,
``--seed N`` and ``--threads N`` overrides; the config's [task] section
must name the same task.  Exit codes: 0 success, 2 configuration error,
3 solver non-convergence (partial outputs are kept).
"""

from __future__ import annotations

import argparse
import sys

from .config import TASKS, ConfigError, load_config
from .runner import ConvergenceFailure, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kmps",
        description="Momentum-space MPS engine for truncated boson field theories")
    sub = p.add_subparsers(dest="command", required=True)
    for task in TASKS:
        sp = sub.add_parser(task, help=f"run a '{task}' experiment")
        sp.add_argument("--config", required=True, help="path to the INI config")
        sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--seed", type=int, default=None, help="seed override")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads for independent sub-runs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, out_override=args.out,
                          seed_override=args.seed, threads_override=args.threads)
        if cfg.task != args.command:
            raise ConfigError(f"config declares task '{cfg.task}' but the "
                              f"'{args.command}' subcommand was invoked")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        summary = run(cfg)
    except ConvergenceFailure as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(f"done: outputs in {cfg.out_dir}")
    for key, val in summary.items():
        if key not in ("task", "ok"):
            print(f"  {key} = {val}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
