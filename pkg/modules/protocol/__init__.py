"""Wire format and message catalog"""

from . import messages
from .codec import MAX_PAYLOAD, PROTOCOL_VERSION, decode, decode_payload, encode, encode_payload
from .connection import FramedConnection, Listener, parse_address
from .messages import CONTROL_TYPES, ControlMessage, DataMessage

__all__ = [
    'CONTROL_TYPES',
    'ControlMessage',
    'DataMessage',
    'FramedConnection',
    'Listener',
    'MAX_PAYLOAD',
    'PROTOCOL_VERSION',
    'decode',
    'decode_payload',
    'encode',
    'encode_payload',
    'messages',
    'parse_address',
]
