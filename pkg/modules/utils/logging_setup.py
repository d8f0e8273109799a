"""
Process logging: one RichHandler on the root logger, tagged with the role
"""

import logging
from typing import Optional

try:
    from rich.console import Console
    from rich.logging import RichHandler
    RICH_AVAILABLE = True
except ImportError:
    RICH_AVAILABLE = False


def setup_logging(role: str, level: str = 'INFO', console: Optional['Console'] = None) -> logging.Logger:
    """
    Configure the root logger for one process

    Args:
        role: controller, worker-<id>, driver or harness; prefixed to every record
        level: logging level name

    Returns:
        The logger for the role
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    if RICH_AVAILABLE:
        handler = RichHandler(console=console or Console(stderr=True), show_path=False,
                              rich_tracebacks=True, markup=False)
        handler.setFormatter(logging.Formatter(f"[{role}] %(name)s: %(message)s", datefmt="%H:%M:%S"))
    else:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(f"%(asctime)s %(levelname)s [{role}] %(name)s: %(message)s"))

    root.addHandler(handler)
    root.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    logging.getLogger('werkzeug').setLevel(logging.WARNING)
    return logging.getLogger(role)
