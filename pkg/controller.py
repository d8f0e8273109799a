#!/usr/bin/env python3
"""
templum controller

Usage:
    python controller.py --listen 127.0.0.1:7700 --min-workers 2
"""

import argparse
import sys

from modules.controller.server import run_controller
from modules.errors import TemplumError
from modules.utils.config import load_config
from modules.utils.console import print_banner, status_line
from modules.utils.logging_setup import setup_logging


def main():
    parser = argparse.ArgumentParser(
        description="templum controller: schedules driver blocks onto workers",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--config", help="JSON config file merged over config/default_config.json")
    parser.add_argument("--listen", help="host:port for workers and the driver")
    parser.add_argument("--min-workers", type=int, help="workers to wait for before serving the driver")
    parser.add_argument("--status-port", type=int, help="serve the status API on this port (0 = off)")
    parser.add_argument("--checkpoint-dir", help="directory for checkpoint manifests and snapshots")
    parser.add_argument("--no-templates", action="store_true", help="refuse template recording and invocation")
    parser.add_argument("--auto-rebalance", action="store_true", help="move partitions away from overloaded workers")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    args = parser.parse_args()

    try:
        settings = load_config(args.config, {
            'controller': {
                'listen': args.listen,
                'min_workers': args.min_workers,
                'status_port': args.status_port,
                'checkpoint_dir': args.checkpoint_dir,
                'templates': False if args.no_templates else None,
                'auto_rebalance': True if args.auto_rebalance else None,
            },
            'logging': {'level': args.log_level},
        })
    except TemplumError as e:
        status_line('fail', str(e))
        sys.exit(2)

    setup_logging('controller', settings.logging.level)
    config = settings.controller
    print_banner("templum controller", "execution templates for iterative dataflow", {
        'Listen': config.listen,
        'Workers': config.min_workers,
        'Templates': 'on' if config.templates else 'off',
        'Status API': f"http://127.0.0.1:{config.status_port}/api/status" if config.status_port else 'off',
    })
    try:
        run_controller(settings)
    except TemplumError as e:
        status_line('fail', f"{type(e).__name__}: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
