"""
Frame codec

A frame is a 4-byte big-endian payload length followed by the payload. Every
payload starts with the protocol version byte and a kind byte: b'C' for a
UTF-8 JSON control message, b'D' for a data message whose 24-byte header
(object, version, recv task; big-endian uint64) precedes the raw bytes.
"""

import base64
import json
import struct
from dataclasses import fields
from typing import Any, Callable, Optional, Union, get_args, get_origin

from ..errors import (
    BadVersionError,
    FrameTooLargeError,
    FramingError,
    MalformedBodyError,
    ProtocolError,
    UnknownTagError,
)
from ..graph.ids import TemplateKey
from ..graph.task import Task
from .messages import CONTROL_TYPES, ControlMessage, DataMessage

PROTOCOL_VERSION = 1
MAX_PAYLOAD = 64 * 1024 * 1024

KIND_CONTROL = b'C'
KIND_DATA = b'D'

_LENGTH = struct.Struct('!I')
_DATA_HEADER = struct.Struct('!QQQ')

Message = Union[ControlMessage, DataMessage]


def _b64(data: bytes) -> str:
    return base64.b64encode(bytes(data)).decode('ascii')


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode('ascii'), validate=True)


_ENCODERS = {
    'bytes': _b64,
    'bytes_list': lambda v: [_b64(x) for x in v],
    'bytes_map': lambda v: sorted([int(k), _b64(b)] for k, b in v.items()),
    'int_map': lambda v: sorted([int(k), x] for k, x in v.items()),
    'task': lambda v: None if v is None else v.to_dict(),
    'key': lambda v: None if v is None else v.to_list(),
}

_DECODERS = {
    'bytes': _unb64,
    'bytes_list': lambda v: [_unb64(x) for x in v],
    'bytes_map': lambda v: {int(k): _unb64(b) for k, b in v},
    'int_map': lambda v: {int(k): x for k, x in v},
    'task': lambda v: None if v is None else Task.from_dict(v),
    'key': lambda v: None if v is None else TemplateKey.from_list(v),
}


def encode_payload(message: Message) -> bytes:
    header = bytes([PROTOCOL_VERSION])
    if isinstance(message, DataMessage):
        return (header + KIND_DATA
                + _DATA_HEADER.pack(message.object, message.version, message.recv_task)
                + bytes(message.payload))

    body = {'type': message.TYPE}
    for name in message.field_names():
        value = getattr(message, name)
        kind = message.WIRE.get(name)
        body[name] = _ENCODERS[kind](value) if kind else value
    return header + KIND_CONTROL + json.dumps(body, separators=(',', ':')).encode('utf-8')


def encode(message: Message, max_payload: int = MAX_PAYLOAD) -> bytes:
    """
    Encode a message as one frame

    Raises:
        FrameTooLargeError: payload exceeds `max_payload`
    """
    payload = encode_payload(message)
    if len(payload) > max_payload:
        raise FrameTooLargeError(f"payload of {len(payload)} bytes exceeds cap {max_payload}")
    return _LENGTH.pack(len(payload)) + payload


def _conforms(value: Any, annotation: Any) -> bool:
    """Check a decoded field against its dataclass annotation"""
    origin = get_origin(annotation)
    if origin is Union:
        return any(_conforms(value, arg) for arg in get_args(annotation))
    if origin is list:
        (item,) = get_args(annotation) or (Any,)
        return isinstance(value, list) and all(_conforms(v, item) for v in value)
    if origin is dict:
        key, item = get_args(annotation) or (Any, Any)
        return isinstance(value, dict) and all(_conforms(k, key) and _conforms(v, item) for k, v in value.items())
    if annotation is Any:
        return True
    if annotation is type(None):
        return value is None
    if annotation is bool:
        return isinstance(value, bool)
    if annotation is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if annotation is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(annotation, type):
        return isinstance(value, annotation)
    return True


def decode_payload(payload: bytes) -> Message:
    """
    Decode one frame payload

    Raises:
        BadVersionError, UnknownTagError, MalformedBodyError
    """
    if len(payload) < 2:
        raise MalformedBodyError("payload shorter than its header")
    if payload[0] != PROTOCOL_VERSION:
        raise BadVersionError(f"unsupported protocol version {payload[0]}")
    kind = payload[1:2]

    if kind == KIND_DATA:
        if len(payload) < 2 + _DATA_HEADER.size:
            raise MalformedBodyError("truncated data header")
        obj, version, recv_task = _DATA_HEADER.unpack_from(payload, 2)
        return DataMessage(obj, version, recv_task, bytes(payload[2 + _DATA_HEADER.size:]))
    if kind != KIND_CONTROL:
        raise MalformedBodyError(f"unknown payload kind {kind!r}")

    try:
        body = json.loads(bytes(payload[2:]).decode('utf-8'))
    except (UnicodeDecodeError, ValueError, RecursionError) as e:
        raise MalformedBodyError(f"control body does not parse: {type(e).__name__}") from e
    if not isinstance(body, dict) or not isinstance(body.get('type'), str):
        raise MalformedBodyError("control body has no type field")

    cls = CONTROL_TYPES.get(body['type'])
    if cls is None:
        raise UnknownTagError(f"unknown message type {body['type']!r}")

    kwargs = {}
    for f in fields(cls):
        if f.name not in body:
            continue
        kind = cls.WIRE.get(f.name)
        try:
            value = _DECODERS[kind](body[f.name]) if kind else body[f.name]
        except Exception as e:
            raise MalformedBodyError(f"{cls.TYPE}.{f.name} is malformed: {e}") from e
        if not _conforms(value, f.type):
            raise MalformedBodyError(f"{cls.TYPE}.{f.name} has the wrong type")
        kwargs[f.name] = value
    return cls(**kwargs)


def decode(frame: bytes, max_payload: int = MAX_PAYLOAD) -> Message:
    """
    Decode a complete frame

    Raises:
        FramingError: the length field does not match the payload size
        FrameTooLargeError: the length field exceeds the cap
    """
    if len(frame) < _LENGTH.size:
        raise FramingError("frame shorter than its length field")
    (length,) = _LENGTH.unpack_from(frame, 0)
    if length > max_payload:
        raise FrameTooLargeError(f"frame length {length} exceeds cap {max_payload}")
    if length != len(frame) - _LENGTH.size:
        raise FramingError(f"length field {length} but payload has {len(frame) - _LENGTH.size} bytes")
    return decode_payload(frame[_LENGTH.size:])


def read_frame(read_exact: Callable[[int], Optional[bytes]], max_payload: int = MAX_PAYLOAD) -> Optional[bytes]:
    """
    Read one payload from a stream

    `read_exact(n)` returns exactly n bytes, or None at a clean end of stream.
    """
    header = read_exact(_LENGTH.size)
    if header is None:
        return None
    (length,) = _LENGTH.unpack(header)
    if length > max_payload:
        raise FrameTooLargeError(f"frame length {length} exceeds cap {max_payload}")
    payload = read_exact(length) if length else b''
    if payload is None:
        raise FramingError("stream closed inside a frame")
    return payload
