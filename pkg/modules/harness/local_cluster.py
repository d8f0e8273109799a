"""
In-process cluster: one controller core, N worker runtimes and a driver
channel wired through a single FIFO queue

Nothing runs concurrently. The driver's `receive` drives the queue until a
message for the driver shows up, so a run is fully deterministic for a given
program. With `codec=True` every message is encoded to a frame and decoded
again on delivery.
"""

import logging
from collections import Counter, deque
from dataclasses import replace
from typing import Deque, Dict, Optional, Set, Tuple

from ..controller.checkpoint import CheckpointStore
from ..controller.core import ControllerCore
from ..driver.client import DriverClient
from ..errors import DriverError
from ..protocol.codec import decode, encode
from ..protocol.messages import PeerUpdate, Shutdown, Welcome
from ..utils.config import Settings
from ..worker.executors import InlineExecutor
from ..worker.registry import StageRegistry, default_registry
from ..worker.runtime import WorkerRuntime

logger = logging.getLogger(__name__)

TO_CONTROLLER = 'controller'
FROM_DRIVER = 'driver->controller'
TO_DRIVER = 'driver'
CONTROL = 'control'
PEER = 'peer'

_MEMBERSHIP = (Welcome, PeerUpdate, Shutdown)


class _WorkerLink:
    def __init__(self, cluster: 'LocalCluster', worker_id: int):
        self.cluster = cluster
        self.worker_id = worker_id

    def to_controller(self, message) -> None:
        self.cluster._post(TO_CONTROLLER, self.worker_id, message)

    def to_peer(self, worker_id: int, message) -> None:
        self.cluster._post(PEER, worker_id, message)


class LocalChannel:
    """Driver side of the in-process cluster"""

    def __init__(self, cluster: 'LocalCluster'):
        self.cluster = cluster
        self.inbox: Deque[object] = deque()
        self.closed = False

    def send(self, message) -> None:
        if self.closed:
            raise DriverError("local channel is closed")
        self.cluster._post(FROM_DRIVER, None, message)

    def receive(self, timeout: float = 0.0):
        while not self.inbox:
            if not self.cluster.step():
                raise DriverError("cluster is idle and no reply is pending")
        return self.inbox.popleft()

    def close(self) -> None:
        self.cluster.run_until_idle()
        self.closed = True


class LocalCluster:
    """
    Args:
        workers: workers registered before the driver starts (the initial active set)
        spare: extra workers registered afterwards; idle until a rebalance names them
        settings: configuration; controller.min_workers is forced to `workers`
        checkpoint_dir: enables checkpoint and restore
        codec: force every message through the wire codec
    """

    def __init__(self, workers: int = 2, spare: int = 0, settings: Optional[Settings] = None,
                 registry: Optional[StageRegistry] = None, checkpoint_dir: Optional[str] = None,
                 codec: bool = False):
        self.settings = settings or Settings()
        self.registry = registry or default_registry()
        self.codec = codec
        self.max_payload = self.settings.protocol.max_frame_bytes
        self.queue: Deque[Tuple[str, Optional[int], object]] = deque()
        self.traffic: Counter = Counter()
        self.runtimes: Dict[int, WorkerRuntime] = {}
        self.dead: Set[int] = set()

        config = replace(self.settings.controller, min_workers=workers)
        store = CheckpointStore(checkpoint_dir) if checkpoint_dir else None
        self.core = ControllerCore(config, self, store)
        self.channel = LocalChannel(self)
        for _ in range(workers + spare):
            self.add_worker()
        self.run_until_idle()

    # controller Transport

    def to_worker(self, worker_id: int, message) -> None:
        self._post(CONTROL, worker_id, message)

    def to_driver(self, message) -> None:
        self._post(TO_DRIVER, None, message)

    def _post(self, kind: str, target: Optional[int], message) -> None:
        self.queue.append((kind, target, message))

    # membership

    def add_worker(self) -> int:
        worker_id = self.core.reserve_worker_id()
        self.runtimes[worker_id] = WorkerRuntime(worker_id, self.registry, _WorkerLink(self, worker_id),
                                                 InlineExecutor(), self.settings.worker)
        self.core.add_worker(worker_id, f"local:{worker_id}", 1)
        return worker_id

    def kill_worker(self, worker_id: int) -> None:
        """Drop a worker without warning; queued traffic to and from it is lost"""
        if self.runtimes.pop(worker_id, None) is None:
            raise DriverError(f"no live worker {worker_id}")
        self.dead.add(worker_id)
        logger.warning("killing worker %d", worker_id)
        self.core.worker_lost(worker_id)

    @property
    def active_workers(self) -> Tuple[int, ...]:
        placement = self.core.placement
        return tuple(placement.workers) if placement else ()

    # delivery

    def step(self) -> bool:
        """Deliver one queued message; False when the queue is empty"""
        if not self.queue:
            return False
        kind, target, message = self.queue.popleft()
        if self.codec:
            message = decode(encode(message, self.max_payload), self.max_payload)
        self.traffic[f"{kind}:{type(message).__name__}"] += 1

        if kind == TO_DRIVER:
            self.channel.inbox.append(message)
        elif kind == FROM_DRIVER:
            self.core.handle_driver(message)
        elif kind == TO_CONTROLLER:
            if target not in self.dead:
                self.core.handle_worker(target, message)
        else:
            runtime = self.runtimes.get(target)
            if runtime is None:
                logger.debug("dropping %s for dead worker %s", type(message).__name__, target)
            elif kind == PEER:
                runtime.handle_peer(message)
            elif not isinstance(message, _MEMBERSHIP):
                runtime.handle_control(message)
        return True

    def run_until_idle(self, limit: int = 10_000_000) -> int:
        delivered = 0
        while delivered < limit and self.step():
            delivered += 1
        return delivered

    def heartbeat(self) -> None:
        """One heartbeat from every live worker, as the timer would send"""
        for runtime in self.runtimes.values():
            runtime.tick()
            runtime.transport.to_controller(runtime.stats.heartbeat())
        self.run_until_idle()

    def client(self, templates: Optional[bool] = None) -> DriverClient:
        config = self.settings.driver if templates is None else replace(self.settings.driver, templates=templates)
        return DriverClient(self.channel, config)

