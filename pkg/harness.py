#!/usr/bin/env python3
"""
templum experiment harness

Usage:
    python harness.py run config/scenarios/lr.toml
    python harness.py local config/scenarios/adaptation.toml
"""

import argparse
import sys

from modules.errors import TemplumError
from modules.harness.runner import run_experiment, run_local
from modules.harness.scenario import load_scenario
from modules.utils.config import load_config
from modules.utils.console import print_banner, status_line
from modules.utils.logging_setup import setup_logging


def main():
    parser = argparse.ArgumentParser(
        description="templum harness: runs scenarios and writes metrics CSV files",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--config", help="JSON config file passed to every process")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="controller, workers and driver as separate processes")
    run.add_argument("scenario", help="scenario TOML file")
    run.add_argument("--timeout", type=float, default=600.0, help="seconds per run (default: 600)")

    local = sub.add_parser("local", help="everything in this process, no sockets")
    local.add_argument("scenario", help="scenario TOML file")
    local.add_argument("--codec", action="store_true", help="pass every message through the wire codec")

    args = parser.parse_args()

    try:
        settings = load_config(args.config, {'logging': {'level': args.log_level}})
        scenario = load_scenario(args.scenario)
    except TemplumError as e:
        status_line('fail', str(e))
        sys.exit(2)

    setup_logging('harness', settings.logging.level)
    print_banner("templum harness", f"{args.command}: {scenario.name}", {
        'Benchmark': scenario.benchmark,
        'Workers': ', '.join(str(w) for w in scenario.sweep_workers) or scenario.workers,
        'Iterations': scenario.iterations,
        'Events': len(scenario.events),
    })

    try:
        if args.command == 'run':
            outcomes = run_experiment(scenario, settings, args.config, args.timeout)
        else:
            outcomes = run_local(scenario, settings, codec=args.codec)
    except TemplumError as e:
        status_line('fail', f"{type(e).__name__}: {e}")
        sys.exit(1)

    for outcome in outcomes:
        status_line('ok', f"{outcome.name}: {len(outcome.rows)} rows -> {outcome.metrics}")


if __name__ == "__main__":
    main()
