#!/usr/bin/env python3
"""
templum worker

Usage:
    python worker.py --controller 127.0.0.1:7700
"""

import argparse
import sys

from modules.errors import TemplumError
from modules.utils.config import load_config
from modules.utils.console import print_banner, status_line
from modules.utils.logging_setup import setup_logging
from modules.worker.server import run_worker


def main():
    parser = argparse.ArgumentParser(
        description="templum worker: executes tasks and template instances",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--config", help="JSON config file merged over config/default_config.json")
    parser.add_argument("--controller", help="controller host:port")
    parser.add_argument("--listen", help="host:port for peer data transfers (port 0 picks one)")
    parser.add_argument("--cores", type=int, help="compute threads (0 = one per CPU)")
    parser.add_argument("--debug-guards", action="store_true", help="check exclusive access to object buffers")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    args = parser.parse_args()

    try:
        settings = load_config(args.config, {
            'worker': {
                'controller': args.controller,
                'listen': args.listen,
                'cores': args.cores,
                'debug_guards': True if args.debug_guards else None,
            },
            'logging': {'level': args.log_level},
        })
    except TemplumError as e:
        status_line('fail', str(e))
        sys.exit(2)

    setup_logging('worker', settings.logging.level)
    print_banner("templum worker", details={
        'Controller': settings.worker.controller,
        'Compute slots': settings.worker.compute_slots,
    })
    try:
        run_worker(settings)
    except (TemplumError, OSError) as e:
        status_line('fail', f"{type(e).__name__}: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
