#!/usr/bin/env python3
"""
templum driver: runs one benchmark against a running controller

Usage:
    python driver.py --controller 127.0.0.1:7700 --benchmark lr --iterations 20
    python driver.py --controller 127.0.0.1:7700 --scenario config/scenarios/lr.toml --metrics out.csv
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from modules.apps.runner import BENCHMARKS, BenchmarkRunner
from modules.driver.channel import TcpChannel
from modules.driver.client import DriverClient
from modules.errors import TemplumError
from modules.harness.metrics import MetricsWriter
from modules.harness.scenario import Scenario, load_scenario, scenario_from_dict
from modules.utils.config import load_config
from modules.utils.console import print_banner, status_line
from modules.utils.file_handler import FileHandler
from modules.utils.logging_setup import setup_logging


def build_scenario(args, settings) -> Scenario:
    if args.scenario:
        path = Path(args.scenario)
        if path.suffix == '.json':
            scenario = scenario_from_dict(FileHandler.read_json(path), str(path))
        else:
            scenario = load_scenario(str(path))
    else:
        scenario = Scenario(name=args.run_name or args.benchmark, benchmark=args.benchmark,
                            templates=settings.driver.templates, learning_rate=settings.driver.learning_rate,
                            estimate_every=settings.driver.estimate_every,
                            checkpoint_every=settings.driver.checkpoint_every, data_dir=settings.driver.data_dir)
    for name in ('workers', 'iterations', 'partitions', 'rows', 'dim', 'k', 'spin_us', 'seed'):
        value = getattr(args, name)
        if value is not None:
            setattr(scenario, name, value)
    if args.run_name:
        scenario.name = args.run_name
    if args.no_templates:
        scenario.templates = False
    return scenario


def summarize(result) -> str:
    if isinstance(result, np.ndarray):
        return np.array2string(result, precision=6, threshold=12)
    return str(result)


def main():
    parser = argparse.ArgumentParser(
        description="templum driver: runs a benchmark program",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--config", help="JSON config file merged over config/default_config.json")
    parser.add_argument("--controller", help="controller host:port")
    parser.add_argument("--scenario", help="scenario file (.toml, or .json as written by the harness)")
    parser.add_argument("--benchmark", choices=sorted(BENCHMARKS), default='lr')
    parser.add_argument("--run-name", help="run name recorded in the metrics file")
    parser.add_argument("--metrics", help="write one CSV row per block execution to this file")
    parser.add_argument("--workers", type=int, help="active worker count (used by halve/restore events)")
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--partitions", type=int)
    parser.add_argument("--rows", type=int)
    parser.add_argument("--dim", type=int)
    parser.add_argument("-k", type=int)
    parser.add_argument("--spin-us", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--no-templates", action="store_true", help="stream every task explicitly")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    args = parser.parse_args()

    try:
        settings = load_config(args.config, {
            'driver': {'controller': args.controller},
            'logging': {'level': args.log_level},
        })
        scenario = build_scenario(args, settings)
    except TemplumError as e:
        status_line('fail', str(e))
        sys.exit(2)

    setup_logging('driver', settings.logging.level)
    print_banner("templum driver", f"{scenario.benchmark} benchmark", {
        'Controller': settings.driver.controller,
        'Iterations': scenario.iterations,
        'Partitions': scenario.partitions,
        'Templates': 'on' if scenario.templates else 'off',
    })

    writer = None
    try:
        channel = TcpChannel(settings.driver.controller, settings.protocol.max_frame_bytes)
        client = DriverClient(channel, settings.driver)
        client.templates = scenario.templates
        if args.metrics:
            writer = MetricsWriter(args.metrics, settings.harness.float_digits)
        runner = BenchmarkRunner(client, scenario.params(), writer, run_name=scenario.name)
        result = runner.run()
        client.shutdown('driver finished')
    except (TemplumError, OSError) as e:
        status_line('fail', f"{type(e).__name__}: {e}")
        sys.exit(1)
    finally:
        if writer is not None:
            writer.close()

    status_line('ok', f"{len(runner.rows)} block executions, {runner.restarts} restarts")
    status_line('ok', f"result: {summarize(result)}")


if __name__ == "__main__":
    main()
