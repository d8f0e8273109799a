"""
Controller process: TCP listener plus the event loop that owns the core
"""

import logging
import queue
import threading
import time
from typing import Dict, Optional

from ..protocol.connection import FramedConnection, Listener
from ..protocol.messages import Hello, Shutdown
from ..utils.config import Settings
from .checkpoint import CheckpointStore
from .core import API, ControllerCore
from .status_api import StatusBridge, StatusServer

logger = logging.getLogger(__name__)

PUBLISH_INTERVAL_S = 0.5


class _ConnectionTransport:
    def __init__(self):
        self.workers: Dict[int, FramedConnection] = {}
        self.driver: Optional[FramedConnection] = None

    def to_worker(self, worker_id: int, message) -> None:
        conn = self.workers.get(worker_id)
        if conn is None:
            logger.warning("no connection to worker %d for %s", worker_id, type(message).__name__)
            return
        conn.send(message)

    def to_driver(self, message) -> None:
        if self.driver is None:
            logger.warning("no driver connected; dropping %s", type(message).__name__)
            return
        self.driver.send(message)


class ControllerServer:
    """
    Every connection thread posts into one queue; a single loop thread
    feeds the core, so scheduler state is never shared between threads.
    """

    def __init__(self, settings: Settings):
        self.settings = settings
        self.transport = _ConnectionTransport()
        store = CheckpointStore(settings.controller.checkpoint_dir)
        self.core = ControllerCore(settings.controller, self.transport, store)
        self.events: 'queue.Queue' = queue.Queue()
        self.listener = Listener(settings.controller.listen, self._on_message, self._on_close,
                                 max_payload=settings.protocol.max_frame_bytes)
        self.bridge = StatusBridge(lambda message: self.events.put(('api', None, message)))
        self.status_server: Optional[StatusServer] = None
        self._stop = threading.Event()

    @property
    def address(self) -> str:
        return self.listener.address

    def _on_message(self, conn: FramedConnection, message) -> None:
        self.events.put(('message', conn, message))

    def _on_close(self, conn: FramedConnection) -> None:
        self.events.put(('close', conn, None))

    def start(self) -> 'ControllerServer':
        self.listener.start()
        if self.settings.controller.status_port:
            self.status_server = StatusServer(self.bridge, port=self.settings.controller.status_port).start()
        logger.info("controller listening on %s", self.address)
        return self

    def serve_forever(self) -> None:
        last_publish = 0.0
        while not self._stop.is_set():
            try:
                kind, conn, message = self.events.get(timeout=PUBLISH_INTERVAL_S)
                self._handle(kind, conn, message)
            except queue.Empty:
                pass
            except Exception:
                logger.exception("dropped %s event after an unexpected error", kind)
            now = time.monotonic()
            if now - last_publish >= PUBLISH_INTERVAL_S:
                self.bridge.publish(self.core.status(), self.core.directory.to_dict())
                last_publish = now
        self.listener.close()
        if self.status_server:
            self.status_server.stop()

    def stop(self) -> None:
        self._stop.set()

    def _handle(self, kind: str, conn: Optional[FramedConnection], message) -> None:
        if kind == 'api':
            self.core.handle_driver(message, origin=API)
            return
        if kind == 'close':
            if conn.tag is None:
                return
            role, worker_id = conn.tag
            if role == 'worker':
                self.transport.workers.pop(worker_id, None)
                self.core.worker_lost(worker_id)
            elif conn is self.transport.driver:
                logger.info("driver disconnected")
                self.transport.driver = None
            return

        if conn.tag is None:
            if not isinstance(message, Hello):
                logger.warning("first message from %s was %s; closing", conn.name, type(message).__name__)
                conn.close()
                return
            if message.role == 'worker':
                worker_id = self.core.reserve_worker_id()
                conn.tag = ('worker', worker_id)
                self.transport.workers[worker_id] = conn
                self.core.add_worker(worker_id, message.address, message.cores)
            else:
                conn.tag = ('driver', None)
                self.transport.driver = conn
                logger.info("driver connected from %s", conn.name)
            return

        role, worker_id = conn.tag
        if role == 'worker':
            self.core.handle_worker(worker_id, message)
        elif isinstance(message, Shutdown):
            logger.info("shutdown requested: %s", message.reason or 'driver finished')
            for conn_ in list(self.transport.workers.values()):
                conn_.send(Shutdown(message.reason))
            self.stop()
        else:
            self.core.handle_driver(message)


def run_controller(settings: Settings) -> None:
    server = ControllerServer(settings).start()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        logger.info("interrupted")
