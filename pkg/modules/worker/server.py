"""
Worker process: controller link, peer data plane, compute pool
"""

import logging
import queue
import threading
import time
from typing import Dict, Optional

from ..errors import ProtocolError
from ..protocol.connection import FramedConnection, Listener
from ..protocol.messages import DataMessage, Hello, PeerUpdate, PullObject, Shutdown, Welcome
from ..utils.config import Settings
from .executors import PoolExecutor
from .registry import StageRegistry, default_registry
from .runtime import WorkerRuntime

logger = logging.getLogger(__name__)


class WorkerServer:
    """
    Connection threads and compute threads post into one queue; the loop
    thread owns the runtime.
    """

    def __init__(self, settings: Settings, registry: Optional[StageRegistry] = None):
        self.settings = settings
        self.config = settings.worker
        self.registry = registry or default_registry()
        self.events: 'queue.Queue' = queue.Queue()
        self.listener = Listener(self.config.listen, self._on_peer, max_payload=settings.protocol.max_frame_bytes)
        self.controller: Optional[FramedConnection] = None
        self.peers: Dict[int, str] = {}
        self.peer_conns: Dict[int, FramedConnection] = {}
        self.runtime: Optional[WorkerRuntime] = None
        self.executor = PoolExecutor(self.config.compute_slots, lambda fn: self.events.put(('call', fn)))
        self._stop = threading.Event()

    @property
    def worker_id(self) -> int:
        return self.runtime.worker_id if self.runtime else -1

    def _on_peer(self, conn: FramedConnection, message) -> None:
        self.events.put(('peer', message))

    def _on_control(self, conn: FramedConnection, message) -> None:
        self.events.put(('control', message))

    def _on_controller_closed(self, conn: FramedConnection) -> None:
        self.events.put(('lost', None))

    # WorkerTransport

    def to_controller(self, message) -> None:
        self.controller.send(message)

    def to_peer(self, worker_id: int, message) -> None:
        if worker_id == self.worker_id:
            self.events.put(('peer', message))
            return
        conn = self.peer_conns.get(worker_id)
        if conn is None or conn.closed:
            address = self.peers.get(worker_id)
            if address is None:
                raise ProtocolError(f"no address for worker {worker_id}")
            conn = FramedConnection.connect(address, lambda c, m: None,
                                            max_payload=self.settings.protocol.max_frame_bytes)
            self.peer_conns[worker_id] = conn
        conn.send(message)

    def start(self) -> 'WorkerServer':
        self.listener.start()
        self.controller = FramedConnection.connect(self.config.controller, self._on_control,
                                                   self._on_controller_closed,
                                                   max_payload=self.settings.protocol.max_frame_bytes)
        self.controller.send(Hello('worker', self.listener.address, self.config.compute_slots))
        logger.info("worker data plane on %s, controller %s", self.listener.address, self.config.controller)
        return self

    def serve_forever(self) -> None:
        heartbeat_s = self.config.heartbeat_s
        next_beat = time.monotonic() + heartbeat_s
        while not self._stop.is_set():
            try:
                kind, payload = self.events.get(timeout=min(heartbeat_s, 0.2))
                self._handle(kind, payload)
            except queue.Empty:
                pass
            now = time.monotonic()
            if self.runtime is not None and now >= next_beat:
                self.runtime.tick()
                self.to_controller(self.runtime.stats.heartbeat())
                next_beat = now + heartbeat_s
        self.executor.shutdown()
        self.listener.close()
        for conn in self.peer_conns.values():
            conn.close()
        if self.controller:
            self.controller.close()

    def stop(self) -> None:
        self._stop.set()

    def _handle(self, kind: str, message) -> None:
        if kind == 'call':
            message()
        elif kind == 'lost':
            logger.error("lost the controller connection")
            self.stop()
        elif kind == 'peer':
            if self.runtime is None:
                logger.warning("peer %s before registration", type(message).__name__)
                return
            if isinstance(message, (DataMessage, PullObject)):
                self.runtime.handle_peer(message)
        elif isinstance(message, Welcome):
            self.peers = dict(message.peers)
            self.runtime = WorkerRuntime(message.worker_id, self.registry, self, self.executor, self.config)
            logger.info("registered as worker %d", message.worker_id)
        elif isinstance(message, PeerUpdate):
            self.peers = dict(message.peers)
            for worker_id in [w for w in self.peer_conns if w not in self.peers]:
                self.peer_conns.pop(worker_id).close()
        elif isinstance(message, Shutdown):
            logger.info("shutdown: %s", message.reason or 'controller request')
            self.stop()
        elif self.runtime is not None:
            self.runtime.handle_control(message)


def run_worker(settings: Settings) -> None:
    server = WorkerServer(settings).start()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        logger.info("interrupted")
