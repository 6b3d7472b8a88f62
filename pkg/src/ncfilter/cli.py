"""Command-line interface.

    ncfilter run <config|preset> [--dt X] [--T X] [--out DIR] [--format csv|json]
    ncfilter trajectories <config|preset> [--M N] [--seed S] [...]
    ncfilter verify <config|preset> [--seeds N]

A positional argument is first matched against the built-in presets
(fig1-ground, fig1-excited, fig2-ground, fig2-excited) and otherwise
treated as a path to a JSON config.  The worker count for ensembles is
capped by the environment variable NCFILTER_THREADS (0 or unset: auto).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConfigError
from .scenarios import compare_oracle, load_scenario, run_scenario, run_trajectories


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("scenario", help="preset name or path to a JSON config")
    parser.add_argument("--dt", type=float, help="override the time step")
    parser.add_argument("--T", type=float, dest="horizon", help="override the horizon")
    parser.add_argument("--out", help="output directory (default from config, ./out)")
    parser.add_argument("--format", choices=("csv", "json"), help="table format")


def _load(args) -> tuple:
    name, cfg = load_scenario(args.scenario)
    overrides = {}
    if args.dt is not None:
        overrides["dt"] = args.dt
    if getattr(args, "horizon", None) is not None:
        overrides["horizon"] = args.horizon
    if getattr(args, "format", None) is not None:
        overrides["out_format"] = args.format
    if overrides:
        cfg = replace(cfg, **overrides)
    return name, cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ncfilter",
        description="Open quantum system driven by non-classical light",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="deterministic curves and count statistics")
    _add_common(p_run)

    p_traj = sub.add_parser("trajectories", help="Monte Carlo ensemble statistics")
    _add_common(p_traj)
    p_traj.add_argument("--M", type=int, help="number of trajectories")
    p_traj.add_argument("--seed", type=int, help="master seed")

    p_ver = sub.add_parser("verify", help="reduced vs joint-space differential checks")
    _add_common(p_ver)
    p_ver.add_argument("--seeds", type=int, default=3, help="stochastic records to compare")
    p_ver.add_argument(
        "--self-test-corrupt",
        action="store_true",
        help=argparse.SUPPRESS,  # negative control used by the test suite
    )

    args = parser.parse_args(argv)
    try:
        name, cfg = _load(args)
        if args.command == "run":
            summary = run_scenario(cfg, name=name, out_dir=args.out)
            print(f"wrote {summary['table']}")
            for col, val in summary["final"].items():
                if col != "t":
                    print(f"final {col} = {val:.6g}")
        elif args.command == "trajectories":
            summary = run_trajectories(
                cfg, name=name, out_dir=args.out, n_traj=args.M, master_seed=args.seed
            )
            print(f"wrote {summary['table']}")
            result = summary["result"]
            if result.scheme == "counting":
                print(f"zero-count fraction = {result.zero_count_fraction:.4f}")
        else:
            report = compare_oracle(cfg, seeds=args.seeds, corrupt=args.self_test_corrupt)
            print(report.text())
            if not report.ok:
                print("verification FAILED", file=sys.stderr)
                return 1
            print("verification passed")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
