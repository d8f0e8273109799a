"""Driver: block API, object table and stage specs"""

from .channel import Channel, TcpChannel
from .client import Block, BlockHandle, DriverClient, block_shape
from .stages import ObjectSpec, ObjectTable, StageSpec

__all__ = [
    'Block',
    'BlockHandle',
    'Channel',
    'DriverClient',
    'ObjectSpec',
    'ObjectTable',
    'StageSpec',
    'TcpChannel',
    'block_shape',
]
