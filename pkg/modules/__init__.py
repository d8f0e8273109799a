"""templum: a small dataflow runtime with execution templates"""

from .errors import TemplumError
from .utils import FileHandler, Settings, load_config

__version__ = '0.1.0'

__all__ = [
    'FileHandler',
    'Settings',
    'TemplumError',
    'load_config',
]
