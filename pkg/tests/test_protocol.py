"""
Tests for the wire codec and framed connections
"""

import json
import queue
import random
import struct
from dataclasses import fields

import pytest

from modules.errors import (
    BadVersionError,
    FrameTooLargeError,
    FramingError,
    MalformedBodyError,
    ProtocolError,
    UnknownTagError,
)
from modules.graph.ids import TemplateKey
from modules.graph.task import Task, TaskKind
from modules.protocol.codec import PROTOCOL_VERSION, decode, decode_payload, encode, encode_payload, read_frame
from modules.protocol.connection import FramedConnection, Listener, parse_address
from modules.protocol.messages import (
    CONTROL_TYPES,
    BlockDone,
    DataMessage,
    Heartbeat,
    Hello,
    InstallLocalTemplate,
    InvokeLocalTemplate,
    InvokeTemplate,
    PatchCopy,
    SpawnTask,
    Welcome,
)

SAMPLES = [
    Hello('worker', '127.0.0.1:9000', 4),
    Welcome(2, {0: 'a:1', 2: 'b:2'}),
    SpawnTask(Task(id=9, kind=TaskKind.COMPUTE, stage='Gradient', reads=(1, 2), writes=(3,),
                   before={4}, params=b'\x01\x02', partition=1), 3),
    InvokeTemplate('lr.optimize', [10, 11, 12], [b'', b'\x00\xff'], [7], 1),
    BlockDone('lr.optimize', 'hit', {7: b'\x00' * 8}, {'c2w_msgs': 2, 'controller_us': 12.5}, 0),
    InstallLocalTemplate(TemplateKey('b', 'sig', 1), {'slots': []}),
    InvokeLocalTemplate(TemplateKey('b', 'sig', 1), 4, [1, 2], [b'p'], 99, {5: 3}, [5]),
    PatchCopy(5, 3, 0, 1, [100, 101]),
    Heartbeat(1, 1000.0, 250.0, 700.0, 50.0, 12),
    DataMessage(5, 3, 101, b'\x00payload\xff'),
]


@pytest.mark.parametrize('message', SAMPLES, ids=lambda m: type(m).__name__)
def test_messages_survive_the_codec(message):
    assert decode(encode(message)) == message


def test_data_message_payload_is_not_base64_inflated():
    payload = bytes(range(256)) * 64
    frame = encode(DataMessage(1, 1, 2, payload))
    assert len(frame) < len(payload) + 64


def test_frame_length_prefix_is_big_endian_payload_size():
    frame = encode(Hello())
    (length,) = struct.unpack('!I', frame[:4])
    assert length == len(frame) - 4
    assert frame[4] == PROTOCOL_VERSION


def test_frame_with_wrong_length_is_a_framing_error():
    frame = encode(Hello())
    with pytest.raises(FramingError):
        decode(frame + b'x')
    with pytest.raises(FramingError):
        decode(frame[:-1])


def test_oversized_frames_are_rejected_on_both_sides():
    big = DataMessage(1, 1, 1, b'x' * 2048)
    with pytest.raises(FrameTooLargeError):
        encode(big, max_payload=1024)
    frame = encode(big)
    with pytest.raises(FrameTooLargeError):
        decode(frame, max_payload=1024)


def test_unknown_version_tag_and_body():
    payload = encode_payload(Hello())
    with pytest.raises(BadVersionError):
        decode_payload(bytes([PROTOCOL_VERSION + 1]) + payload[1:])

    body = json.dumps({'type': 'NoSuchMessage'}).encode('utf-8')
    with pytest.raises(UnknownTagError):
        decode_payload(bytes([PROTOCOL_VERSION]) + b'C' + body)

    with pytest.raises(MalformedBodyError):
        decode_payload(bytes([PROTOCOL_VERSION]) + b'C' + b'{not json')
    with pytest.raises(MalformedBodyError):
        decode_payload(bytes([PROTOCOL_VERSION]) + b'D' + b'\x00' * 4)
    with pytest.raises(MalformedBodyError):
        decode_payload(b'\x01')


def control_payload(body) -> bytes:
    return bytes([PROTOCOL_VERSION]) + b'C' + json.dumps(body).encode('utf-8')


@pytest.mark.parametrize('body', [
    {'type': 'InvokeTemplate', 'block': 'b', 'task_ids': 5, 'params': []},
    {'type': 'InvokeTemplate', 'block': 'b', 'task_ids': ['1'], 'params': []},
    {'type': 'InvokeTemplate', 'block': 7, 'task_ids': [], 'params': []},
    {'type': 'InvokeTemplate', 'block': 'b', 'task_ids': [], 'params': ['%%%']},
    {'type': 'TaskDone', 'task_id': True},
    {'type': 'TaskDone', 'task_id': 1.5},
    {'type': 'RebalanceCmd', 'workers': [0, None]},
    {'type': 'RestoreCmd', 'objects': [[1, 'x']]},
    {'type': 'BlockStart', 'block': 'b', 'record': 'yes'},
    {'type': 'Welcome', 'worker_id': 0, 'peers': [[0, 5]]},
    {'type': 'SpawnTask', 'task': {'id': 1, 'kind': 'nonsense', 'stage': 's'}},
    {'type': 'SpawnTask', 'task': {'id': 1, 'kind': 'compute', 'stage': 's', 'reads': ['a']}},
    {'type': 'InstallAck', 'key': ['b', 'sig'], 'ok': True},
], ids=lambda b: b['type'])
def test_fields_of_the_wrong_type_are_malformed(body):
    with pytest.raises(MalformedBodyError):
        decode_payload(control_payload(body))


def test_deeply_nested_bodies_are_malformed():
    with pytest.raises(MalformedBodyError):
        decode_payload(bytes([PROTOCOL_VERSION]) + b'C' + b'[' * 100_000)
    nested = b'{"type":"TaskDone","task_id":' + b'[' * 100_000 + b']' * 100_000 + b'}'
    with pytest.raises(MalformedBodyError):
        decode_payload(bytes([PROTOCOL_VERSION]) + b'C' + nested)


def random_json(rng, depth=0):
    choice = rng.randrange(7 if depth < 3 else 5)
    if choice == 0:
        return rng.randint(-2**70, 2**70)
    if choice == 1:
        return ''.join(rng.choice('ab%=/+') for _ in range(rng.randint(0, 6)))
    if choice == 2:
        return rng.choice([None, True, False])
    if choice == 3:
        return rng.uniform(-1e6, 1e6)
    if choice == 4:
        return rng.randint(0, 10)
    if choice == 5:
        return [random_json(rng, depth + 1) for _ in range(rng.randint(0, 4))]
    return {rng.choice(['id', 'kind', 'stage', 'x', '0']): random_json(rng, depth + 1) for _ in range(rng.randint(0, 4))}


def test_decoder_fuzz_only_raises_protocol_errors():
    rng = random.Random(31337)
    valid = [encode(m) for m in SAMPLES]
    types = sorted(CONTROL_TYPES)
    for _ in range(3000):
        mode = rng.randrange(4)
        if mode == 0:
            payload = bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 64)))
            frame = struct.pack('!I', len(payload)) + payload
        elif mode == 1:
            frame = bytearray(rng.choice(valid))
            for _ in range(rng.randint(1, 4)):
                frame[rng.randrange(len(frame))] = rng.getrandbits(8)
            frame = bytes(frame)
        elif mode == 2:
            frame = rng.choice(valid)
            frame = frame[:rng.randrange(len(frame))] + bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 8)))
        else:
            cls = CONTROL_TYPES[rng.choice(types)]
            body = {'type': cls.TYPE}
            for f in fields(cls):
                if rng.random() < 0.7:
                    body[f.name] = random_json(rng)
            payload = control_payload(body)
            frame = struct.pack('!I', len(payload)) + payload
        try:
            decode(frame)
        except ProtocolError:
            pass


def test_read_frame_handles_clean_end_and_truncation():
    frame = encode(Hello())
    stream = [frame[:4], frame[4:]]
    assert decode_payload(read_frame(lambda n: stream.pop(0))) == Hello()
    assert read_frame(lambda n: None) is None
    chunks = [frame[:4], None]
    with pytest.raises(FramingError):
        read_frame(lambda n: chunks.pop(0))


def test_parse_address():
    assert parse_address('127.0.0.1:7700') == ('127.0.0.1', 7700)
    with pytest.raises(ValueError):
        parse_address('localhost')


@pytest.mark.slow
def test_framed_connection_loopback():
    received = queue.Queue()
    closed = queue.Queue()

    def echo(conn, message):
        conn.send(message)

    listener = Listener('127.0.0.1:0', echo).start()
    try:
        conn = FramedConnection.connect(listener.address, lambda c, m: received.put(m),
                                        lambda c: closed.put(True))
        for message in SAMPLES:
            conn.send(message)
        echoed = [received.get(timeout=5) for _ in SAMPLES]
        assert echoed == SAMPLES
        conn.close()
        assert closed.get(timeout=5) is True
        assert conn.closed
    finally:
        listener.close()
