"""
Shared fixtures; the repository root goes on sys.path so `modules` imports
the same way the entry scripts do.
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.utils.config import Settings  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: starts real processes or sockets")


@pytest.fixture
def settings(tmp_path):
    """Default settings with every output directory under tmp_path"""
    s = Settings()
    s.controller.checkpoint_dir = str(tmp_path / 'checkpoints')
    s.driver.data_dir = str(tmp_path / 'data')
    s.harness.output_dir = str(tmp_path / 'runs')
    return s
