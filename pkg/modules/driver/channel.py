"""
Driver link to the controller
"""

import logging
import queue
from typing import Protocol

from ..errors import DriverError
from ..protocol.codec import MAX_PAYLOAD
from ..protocol.connection import FramedConnection
from ..protocol.messages import Hello

logger = logging.getLogger(__name__)

_CLOSED = object()


class Channel(Protocol):
    def send(self, message) -> None: ...

    def receive(self, timeout: float): ...

    def close(self) -> None: ...


class TcpChannel:
    """Framed TCP connection whose inbound messages queue up for `receive`"""

    def __init__(self, address: str, max_payload: int = MAX_PAYLOAD):
        self.address = address
        self._inbox: 'queue.Queue' = queue.Queue()
        self._conn = FramedConnection.connect(
            address,
            lambda conn, message: self._inbox.put(message),
            lambda conn: self._inbox.put(_CLOSED),
            max_payload=max_payload,
        )
        self._conn.send(Hello('driver'))
        logger.info("connected to controller at %s", address)

    def send(self, message) -> None:
        if self._conn.closed:
            raise DriverError(f"connection to {self.address} is closed")
        self._conn.send(message)

    def receive(self, timeout: float):
        try:
            message = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise DriverError(f"no reply from controller within {timeout:g}s") from None
        if message is _CLOSED:
            raise DriverError(f"controller at {self.address} closed the connection")
        return message

    def close(self) -> None:
        self._conn.close()
