"""
Worker runtime

A sans-IO engine: the server (or the in-process cluster) hands it control
and data messages, and it answers through a transport. Explicit tasks and
template instances share one rolling task graph. Every `before` edge a worker
sees points at a task on the same worker that was delivered no later than
its dependent, so a dependency that is no longer pending has completed.
"""

import json
import logging
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Deque, Dict, Iterable, List, Optional, Protocol, Set, Tuple

from ..controller.checkpoint import snapshot_name
from ..errors import (
    CheckpointIntegrityError,
    InstallError,
    InvocationError,
    TemplateError,
    TemplumError,
    TransferError,
    VersionMismatchError,
)
from ..graph.ids import TemplateKey
from ..graph.task import Task, TaskKind
from ..protocol.messages import (
    Ack,
    DataMessage,
    ExecuteTask,
    FetchObjects,
    InstallAck,
    InstallLocalTemplate,
    InvokeLocalTemplate,
    ObjectValues,
    PatchCopy,
    PullObject,
    RestoreCmd,
    TaskDone,
    TemplateDone,
    WorkerFault,
)
from ..utils.config import WorkerConfig
from ..utils.file_handler import FileHandler
from .executors import InlineExecutor
from .local_template import LocalTemplate
from .object_store import ObjectStore
from .registry import StageRegistry
from .stats import BLOCKED, BUSY, IDLE, StatsTracker

logger = logging.getLogger(__name__)

EXPLICIT = 'explicit'
TEMPLATE = 'template'


class WorkerTransport(Protocol):
    def to_controller(self, message) -> None: ...

    def to_peer(self, worker_id: int, message) -> None: ...


@dataclass
class _Instance:
    key: TemplateKey
    instance: int
    remaining: Set[int] = field(default_factory=set)
    readback: List[int] = field(default_factory=list)


class WorkerRuntime:
    def __init__(self, worker_id: int, registry: StageRegistry, transport: WorkerTransport,
                 executor=None, config: Optional[WorkerConfig] = None,
                 clock: Callable[[], float] = time.monotonic):
        self.worker_id = worker_id
        self.registry = registry
        self.transport = transport
        self.executor = executor or InlineExecutor()
        self.config = config or WorkerConfig()
        self.clock = clock
        self.store = ObjectStore(self.config.debug_guards)
        self.stats = StatsTracker(worker_id, clock)
        self.templates: Dict[TemplateKey, LocalTemplate] = {}

        self.pending: Dict[int, Task] = {}
        self.owner: Dict[int, Tuple[str, int]] = {}
        self.unfinished: Dict[int, int] = {}
        self.dependents: Dict[int, List[int]] = defaultdict(list)
        self.ready: Deque[int] = deque()
        self.running: Dict[int, Task] = {}
        self.arrivals: Dict[int, DataMessage] = {}
        self.starved_since: Dict[int, float] = {}
        self.instances: Dict[int, _Instance] = {}
        self.faulted = False
        self._halts = 0
        self._draining = False

    # -- message entry points ---------------------------------------------

    def handle_control(self, message) -> None:
        if isinstance(message, ExecuteTask):
            self.add_tasks([message.task], (EXPLICIT, 0))
        elif isinstance(message, InvokeLocalTemplate):
            self.invoke_local_template(message)
        elif isinstance(message, InstallLocalTemplate):
            self.install_local_template(message)
        elif isinstance(message, PatchCopy):
            self._patch(message)
        elif isinstance(message, FetchObjects):
            values = {o: self.store.payload(o) for o in message.ids}
            self.transport.to_controller(ObjectValues(values, message.request))
        elif isinstance(message, RestoreCmd):
            self._restore(message)
        else:
            logger.warning("worker %d ignoring %s", self.worker_id, type(message).__name__)

    def handle_peer(self, message) -> None:
        if isinstance(message, DataMessage):
            self.arrivals[message.recv_task] = message
            if self.starved_since.pop(message.recv_task, None) is not None:
                self.ready.append(message.recv_task)
            self.dispatch_step()
        elif isinstance(message, PullObject):
            stored = self.store.get(message.object)
            if stored.version != message.version:
                self._fault(message.recv_task, VersionMismatchError(
                    message.object, message.version, stored.version, message.recv_task))
                return
            self.transport.to_peer(message.requester, DataMessage(
                message.object, message.version, message.recv_task, stored.payload))
        else:
            logger.warning("worker %d ignoring peer %s", self.worker_id, type(message).__name__)

    def tick(self) -> None:
        """Fault receives that have waited too long for their data"""
        now = self.clock()
        for task_id, since in list(self.starved_since.items()):
            if now - since > self.config.recv_timeout_s:
                del self.starved_since[task_id]
                self._fault(task_id, TransferError(
                    f"receive {task_id} got no data within {self.config.recv_timeout_s:g}s"))

    # -- templates --------------------------------------------------------

    def install_local_template(self, message: InstallLocalTemplate) -> None:
        started = time.perf_counter()
        try:
            local = LocalTemplate.from_dict(message.key, message.template)
            if local.worker != self.worker_id:
                raise InstallError(f"template for worker {local.worker} sent to worker {self.worker_id}")
            local.validate(self.registry.stages())
        except (TemplumError, KeyError, TypeError, ValueError) as e:
            logger.warning("rejecting template %s: %s", message.key, e)
            self.transport.to_controller(InstallAck(message.key, False, str(e),
                                                    (time.perf_counter() - started) * 1e6))
            return
        self.templates[message.key] = local
        elapsed_us = (time.perf_counter() - started) * 1e6
        logger.debug("installed %s (%d slots, %.0f us)", message.key, len(local.slots), elapsed_us)
        self.transport.to_controller(InstallAck(message.key, True, '', elapsed_us))

    def invoke_local_template(self, message: InvokeLocalTemplate) -> None:
        local = self.templates.get(message.key)
        try:
            if local is None:
                raise TemplateError(f"template {message.key} is not installed")
            tasks = local.instantiate(message.task_ids, message.params, message.copy_base,
                                      message.base_versions)
        except (TemplateError, InvocationError) as e:
            self._fault(0, e)
            return
        instance = _Instance(message.key, message.instance, {t.id for t in tasks}, list(message.readback))
        self.instances[message.instance] = instance
        if not tasks:
            self._finish_instance(instance)
            return
        self.add_tasks(tasks, (TEMPLATE, message.instance))

    def _finish_instance(self, instance: _Instance) -> None:
        self.instances.pop(instance.instance, None)
        values = {o: self.store.payload(o) for o in instance.readback}
        self.transport.to_controller(TemplateDone(instance.key, instance.instance, values))

    # -- task graph -------------------------------------------------------

    def add_tasks(self, tasks: Iterable[Task], owner: Tuple[str, int]) -> None:
        tasks = list(tasks)
        for task in tasks:
            if task.id in self.pending:
                self._fault(task.id, InvocationError(f"task {task.id} is already pending"))
                return
            self.pending[task.id] = task
            self.owner[task.id] = owner
        for task in tasks:
            deps = [d for d in task.before if d in self.pending]
            self.unfinished[task.id] = len(deps)
            for dep in deps:
                self.dependents[dep].append(task.id)
        for task in tasks:
            if self.unfinished[task.id] == 0:
                self._became_ready(task)
        self.dispatch_step()

    def _became_ready(self, task: Task) -> None:
        if task.kind is TaskKind.RECEIVE and task.id not in self.arrivals:
            self.starved_since[task.id] = self.clock()
            return
        self.ready.append(task.id)

    def dispatch_step(self) -> None:
        """Run ready tasks until none is left or the worker faults"""
        if self._draining:
            return
        self._draining = True
        try:
            while self.ready and not self.faulted:
                task = self.pending.get(self.ready.popleft())
                if task is None or task.id in self.running:
                    continue
                try:
                    self._execute(task)
                except TemplumError as e:
                    self._fault(task.id, e)
                except OSError as e:
                    self._fault(task.id, e)
        finally:
            self._draining = False
        self._update_state()

    def _update_state(self) -> None:
        if self.running:
            self.stats.set_state(BUSY)
        elif self.pending:
            self.stats.set_state(BLOCKED)
        else:
            self.stats.set_state(IDLE)

    def _check_reads(self, task: Task, objects: Iterable[int]) -> None:
        for o in objects:
            expected = task.read_version(o)
            actual = self.store.version(o)
            if expected is not None and actual != expected:
                raise VersionMismatchError(o, expected, actual, task.id)

    def _execute(self, task: Task) -> None:
        if task.kind is TaskKind.COMPUTE:
            self._check_reads(task, task.reads)
            for o in task.writes:
                produced = task.versions.get(o)
                if produced is not None and self.store.version(o) >= produced:
                    raise VersionMismatchError(o, produced - 1, self.store.version(o), task.id)
            inputs = [self.store.payload(o) for o in task.reads]
            self.store.acquire(task.id, task.reads, task.writes)
            self.running[task.id] = task
            halts = self._halts
            self.executor.submit(
                lambda: self.registry.run(task.stage, inputs, task.params, len(task.writes)),
                lambda result, error: self._compute_done(task, halts, result, error))
        elif task.kind is TaskKind.SEND:
            self.run_send(task)
        elif task.kind is TaskKind.RECEIVE:
            self.run_receive(task)
        elif task.kind is TaskKind.COMMIT:
            self._check_reads(task, task.reads)
            folder = Path(json.loads(task.params.decode('utf-8'))['directory'])
            for o in task.reads:
                stored = self.store.get(o)
                FileHandler.write_bytes_atomic(folder / snapshot_name(o, stored.version), stored.payload)
            self._complete(task)

    def run_send(self, task: Task) -> None:
        """Ship the object version a send task reads to its peer receive"""
        self._check_reads(task, task.reads)
        stored = self.store.get(task.object)
        self.transport.to_peer(task.peer, DataMessage(task.object, stored.version, task.pair, stored.payload))
        self._complete(task)

    def run_receive(self, task: Task) -> None:
        """
        Install the buffered payload of a receive task

        Raises:
            TransferError: no payload has arrived for the task
            VersionMismatchError: the payload carries another version
        """
        message = self.arrivals.pop(task.id, None)
        if message is None:
            raise TransferError(f"receive {task.id} has no payload")
        expected = task.versions.get(task.object)
        if expected is not None and message.version != expected:
            raise VersionMismatchError(task.object, expected, message.version, task.id)
        self.store.put(task.object, message.version, message.payload)
        self._complete(task)

    def _compute_done(self, task: Task, halts: int, result, error) -> None:
        if halts != self._halts:
            return
        self.running.pop(task.id, None)
        self.store.release(task.id, task.reads, task.writes)
        if error is not None:
            self._fault(task.id, error)
            return
        for o, payload in zip(task.writes, result):
            self.store.put(o, task.versions.get(o, self.store.version(o) + 1), payload)
        self.stats.task_executed()
        self._complete(task)
        self.dispatch_step()

    def _complete(self, task: Task) -> None:
        self.pending.pop(task.id, None)
        self.unfinished.pop(task.id, None)
        kind, ref = self.owner.pop(task.id, (EXPLICIT, 0))
        for dependent in self.dependents.pop(task.id, []):
            self.unfinished[dependent] -= 1
            if self.unfinished[dependent] == 0:
                self._became_ready(self.pending[dependent])
        if kind == TEMPLATE:
            instance = self.instances.get(ref)
            if instance is not None:
                instance.remaining.discard(task.id)
                if not instance.remaining:
                    self._finish_instance(instance)
        else:
            self.transport.to_controller(TaskDone(task.id))

    # -- patches, faults, restore -----------------------------------------

    def _patch(self, message: PatchCopy) -> None:
        """Pull one object from its source; acknowledged as TaskDone(recv id)"""
        recv = Task(id=message.recv_id, kind=TaskKind.RECEIVE, stage='',
                    writes=(message.object,), versions={message.object: message.version},
                    assigned_worker=self.worker_id, peer=message.src, pair=message.copy_ids[0])
        self.add_tasks([recv], (EXPLICIT, 0))
        self.transport.to_peer(message.src, PullObject(message.object, message.version,
                                                       message.recv_id, self.worker_id))

    def _fault(self, task_id: int, error: BaseException) -> None:
        logger.error("worker %d task %d failed: %s: %s", self.worker_id, task_id, type(error).__name__, error)
        self.faulted = True
        self.transport.to_controller(WorkerFault(self.worker_id, type(error).__name__, str(error), task_id))

    def halt(self) -> None:
        """Drop every pending task, instance and buffered arrival"""
        self._halts += 1
        for task in self.running.values():
            self.store.release(task.id, task.reads, task.writes)
        self.pending.clear()
        self.owner.clear()
        self.unfinished.clear()
        self.dependents.clear()
        self.ready.clear()
        self.running.clear()
        self.arrivals.clear()
        self.starved_since.clear()
        self.instances.clear()
        self.faulted = False
        self._update_state()

    def _restore(self, message: RestoreCmd) -> None:
        self.halt()
        if message.checkpoint_id:
            self.store.clear()
            folder = Path(message.directory)
            for object_id, version in message.objects:
                path = folder / snapshot_name(object_id, version)
                try:
                    self.store.put(object_id, version, path.read_bytes())
                except OSError as e:
                    self._fault(0, CheckpointIntegrityError(
                        f"cannot restore object {object_id} v{version} from {path}: {e}"))
                    return
            logger.info("worker %d restored %d objects from %s", self.worker_id, len(message.objects),
                        message.checkpoint_id)
        self.transport.to_controller(Ack('RestoreCmd', message.checkpoint_id, message.generation))
