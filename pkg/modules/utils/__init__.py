"""Utility modules for templum"""

from .config import (
    ControllerConfig,
    DriverConfig,
    HarnessConfig,
    ProtocolConfig,
    Settings,
    WorkerConfig,
    load_config,
)
from .file_handler import FileHandler
from .logging_setup import setup_logging

__all__ = [
    'ControllerConfig',
    'DriverConfig',
    'FileHandler',
    'HarnessConfig',
    'ProtocolConfig',
    'Settings',
    'WorkerConfig',
    'load_config',
    'setup_logging',
]
