"""Command-line harness: scenario sweeps, the adversary suite, reports.

Exit codes: 0 success, 2 config error, 3 property or outcome violation,
4 tick-limit livelock.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .adversary import adversary_suite, format_suite_report
from .harness import format_csv, parse_csv, run_sweep
from .report import build_report
from .scenario import ConfigError, load_config

SEED_ENV_VAR = "FAIREX_SEED"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VIOLATION = 3
EXIT_LIVELOCK = 4


def _cmd_run(args) -> int:
    try:
        cfg, sweep = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if os.environ.get(SEED_ENV_VAR):
        cfg.seed = int(os.environ[SEED_ENV_VAR])

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, configs = run_sweep(cfg, sweep, trace_dir=out_dir)
    csv_path = out_dir / "metrics.csv"
    csv_path.write_text(format_csv(rows, configs))
    print(f"wrote {csv_path} ({len(rows)} rows)")

    outcomes = {row["outcome"] for row in rows}
    if "livelock" in outcomes:
        print("livelock detected", file=sys.stderr)
        return EXIT_LIVELOCK
    if outcomes - {"settled"}:
        print(f"unexpected outcomes: {sorted(outcomes - {'settled'})}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_adversary_suite(args) -> int:
    seed = int(os.environ.get(SEED_ENV_VAR, args.seed))
    results = adversary_suite(seed=seed)
    report = format_suite_report(results)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "adversary_suite.tsv").write_text(report)
    print(report, end="")
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} behaviours ok")
    return EXIT_VIOLATION if failed else EXIT_OK


def _cmd_report(args) -> int:
    try:
        rows, configs = parse_csv(Path(args.csv).read_text())
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(build_report(rows, configs), end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fairex",
        description="Fair-exchange computation payment simulator harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario sweep from a config file")
    p_run.add_argument("--config", required=True, help="INI scenario config")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_adv = sub.add_parser("adversary-suite",
                           help="run the scripted misbehaviour matrix")
    p_adv.add_argument("--out", help="optional output directory")
    p_adv.add_argument("--seed", type=int, default=100)
    p_adv.set_defaults(func=_cmd_adversary_suite)

    p_rep = sub.add_parser("report", help="derive ratio and fee tables from a CSV")
    p_rep.add_argument("--csv", required=True, help="metrics CSV from `run`")
    p_rep.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
