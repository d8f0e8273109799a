"""
Framed TCP connection with one reader thread and one writer queue
"""

import logging
import queue
import socket
import threading
from typing import Callable, Optional, Tuple

from ..errors import FramingError, ProtocolError, UnknownTagError
from .codec import MAX_PAYLOAD, Message, decode_payload, encode, read_frame

logger = logging.getLogger(__name__)

_CLOSE = object()


def parse_address(address: str) -> Tuple[str, int]:
    """'host:port' -> (host, port)"""
    host, _, port = address.rpartition(':')
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {address!r}")
    return host, int(port)


def recv_exact(sock: socket.socket, length: int) -> Optional[bytes]:
    """Read exactly `length` bytes; None if the peer closed before sending any"""
    got = 0
    chunks = []
    while got < length:
        chunk = sock.recv(length - got)
        if not chunk:
            if got:
                raise FramingError('peer disappeared inside a frame')
            return None
        got += len(chunk)
        chunks.append(chunk)
    return b''.join(chunks)


class FramedConnection:
    """
    A socket carrying length-prefixed messages

    Decoded messages are handed to `on_message(conn, msg)` from the reader
    thread; `on_close(conn)` runs once when the connection ends. Writes are
    serialized through a queue drained by a dedicated writer thread.
    """

    def __init__(self, sock: socket.socket, on_message: Callable, on_close: Optional[Callable] = None,
                 name: str = '', max_payload: int = MAX_PAYLOAD):
        self.sock = sock
        self.name = name or str(sock.getpeername() if sock else '')
        self.max_payload = max_payload
        self.tag = None
        self._on_message = on_message
        self._on_close = on_close
        self._outbox: 'queue.Queue' = queue.Queue()
        self._closed = threading.Event()
        self._reader = threading.Thread(target=self._read_loop, name=f"read-{self.name}", daemon=True)
        self._writer = threading.Thread(target=self._write_loop, name=f"write-{self.name}", daemon=True)

    @classmethod
    def connect(cls, address: str, on_message: Callable, on_close: Optional[Callable] = None,
                timeout: float = 10.0, **kwargs) -> 'FramedConnection':
        sock = socket.create_connection(parse_address(address), timeout=timeout)
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn = cls(sock, on_message, on_close, name=address, **kwargs)
        conn.start()
        return conn

    def start(self) -> 'FramedConnection':
        self._reader.start()
        self._writer.start()
        return self

    @property
    def closed(self) -> bool:
        return self._closed.is_set()

    def send(self, message: Message) -> None:
        if self.closed:
            logger.debug("dropping %s on closed connection %s", type(message).__name__, self.name)
            return
        self._outbox.put(encode(message, self.max_payload))

    def close(self) -> None:
        if self._closed.is_set():
            return
        self._closed.set()
        self._outbox.put(_CLOSE)
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
        if self._on_close:
            self._on_close(self)

    def _write_loop(self):
        while True:
            frame = self._outbox.get()
            if frame is _CLOSE:
                return
            try:
                self.sock.sendall(frame)
            except OSError as e:
                logger.debug("write to %s failed: %s", self.name, e)
                self.close()
                return

    def _read_loop(self):
        try:
            while not self.closed:
                payload = read_frame(lambda n: recv_exact(self.sock, n), self.max_payload)
                if payload is None:
                    break
                try:
                    message = decode_payload(payload)
                except UnknownTagError as e:
                    logger.warning("skipping message from %s: %s", self.name, e)
                    continue
                self._on_message(self, message)
        except FramingError as e:
            logger.error("framing error on %s: %s", self.name, e)
        except ProtocolError as e:
            logger.error("protocol error on %s: %s", self.name, e)
        except OSError as e:
            if not self.closed:
                logger.debug("connection %s ended: %s", self.name, e)
        finally:
            self.close()


class Listener:
    """Accepts connections on a TCP port and wraps each in a FramedConnection"""

    def __init__(self, address: str, on_message: Callable, on_close: Optional[Callable] = None,
                 max_payload: int = MAX_PAYLOAD):
        host, port = parse_address(address)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(64)
        self.address = f"{host}:{self.sock.getsockname()[1]}"
        self._on_message = on_message
        self._on_close = on_close
        self._max_payload = max_payload
        self._thread = threading.Thread(target=self._accept_loop, name=f"accept-{self.address}", daemon=True)

    def start(self) -> 'Listener':
        self._thread.start()
        return self

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

    def _accept_loop(self):
        while True:
            try:
                sock, peer = self.sock.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            FramedConnection(sock, self._on_message, self._on_close,
                             name=f"{peer[0]}:{peer[1]}", max_payload=self._max_payload).start()
