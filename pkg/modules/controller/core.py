"""
Controller scheduling core

The core is a single-threaded state machine: connection threads (or the
in-process cluster) feed it one message at a time and it answers through a
transport. Work is processed as units, one at a time: an explicit block, a
template invocation, a read, a rebalance, a checkpoint or a restore. Driver
messages that arrive while a unit runs wait in order, except the tasks and
end marker of the block currently being streamed.
"""

import json
import logging
import time
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, Iterable, List, Optional, Protocol, Set, Tuple

from ..errors import (
    CheckpointIntegrityError,
    InvocationError,
    ProtocolError,
    RebalanceError,
    TemplateError,
    TemplumError,
)
from ..graph.directory import DataDirectory, apply_writes
from ..graph.ids import CopyIdAllocator, TemplateKey, is_controller_id
from ..graph.task import Task, TaskKind
from ..protocol.messages import (
    Ack,
    BlockDone,
    BlockEnd,
    BlockFailed,
    BlockStart,
    CheckpointCmd,
    CheckpointDone,
    DefineObjects,
    ErrorReply,
    ExecuteTask,
    FetchObjects,
    Heartbeat,
    Hello,
    InstallAck,
    InstallLocalTemplate,
    InvokeLocalTemplate,
    InvokeTemplate,
    ObjectValues,
    PatchCopy,
    PeerUpdate,
    ReadObjects,
    RebalanceCmd,
    RebalanceDone,
    RestoreCmd,
    Restored,
    SpawnTask,
    TaskDone,
    TemplateDone,
    TemplateInstalled,
    Welcome,
    WorkerFault,
)
from ..utils.config import ControllerConfig
from .assignment import EpochRegistry, Placement, assign_task
from .checkpoint import CheckpointStore
from .load_monitor import LoadMonitor
from .planner import Planner
from .templates import (
    TemplateCache,
    TemplateRecorder,
    WorkerTemplateCentral,
    apply_patch,
    assignment_for,
    generate_worker_templates,
    invoke,
    validate_and_patch,
)

logger = logging.getLogger(__name__)

DRIVER = 'driver'
API = 'api'
INTERNAL = 'internal'


class Transport(Protocol):
    def to_worker(self, worker_id: int, message) -> None: ...

    def to_driver(self, message) -> None: ...


@dataclass
class AutoRebalance:
    """Internal command queued by the load monitor"""
    placement: Placement
    generation: int = 0


@dataclass
class _Unit:
    kind: str
    origin: str
    block: str = ''
    mode: str = 'explicit'
    record: bool = False
    silent: bool = False
    readback: List[int] = field(default_factory=list)
    waiting: Set[tuple] = field(default_factory=set)
    then: Optional[Callable[[], None]] = None
    closed: bool = False
    failed: Optional[Tuple[str, str]] = None
    planner: Optional[Planner] = None
    entry: Optional[DataDirectory] = None
    recorder: Optional[TemplateRecorder] = None
    dispatched: Dict[int, Task] = field(default_factory=dict)
    values: Dict[int, bytes] = field(default_factory=dict)
    stats: Counter = field(default_factory=Counter)
    started: float = 0.0
    central: Optional[WorkerTemplateCentral] = None
    context: dict = field(default_factory=dict)


class ControllerCore:
    """
    Args:
        config: controller section of the settings
        transport: delivers messages to workers and the driver
        store: checkpoint store; checkpoint and restore are refused without one
    """

    def __init__(self, config: ControllerConfig, transport: Transport,
                 store: Optional[CheckpointStore] = None, clock: Callable[[], float] = time.perf_counter):
        self.config = config
        self.transport = transport
        self.store = store
        self.clock = clock

        self.directory = DataDirectory()
        self.workers: Dict[int, dict] = {}
        self.placement: Optional[Placement] = None
        self.epochs = EpochRegistry()
        self.epoch = 0
        self.cache = TemplateCache(config.max_variants_per_block)
        self.copy_ids = CopyIdAllocator()
        self.monitor = LoadMonitor(config.rebalance_factor, config.rebalance_windows)
        self.generation = 0
        self.high_water = 0
        self.last_key: Optional[TemplateKey] = None
        self.last_checkpoint: Optional[str] = None
        self.counters: Counter = Counter()
        self.invocations: Counter = Counter()
        self.busy_shares: Dict[int, float] = {}

        self._next_worker = 0
        self._instance = 0
        self._request = 0
        self._deferred: Deque[Tuple[str, object]] = deque()
        self._unit: Optional[_Unit] = None

    # -- membership -------------------------------------------------------

    def reserve_worker_id(self) -> int:
        worker_id = self._next_worker
        self._next_worker += 1
        return worker_id

    def add_worker(self, worker_id: int, address: str, cores: int) -> None:
        self.workers[worker_id] = {'address': address, 'cores': cores}
        peers = {w: info['address'] for w, info in self.workers.items()}
        self._send_worker(worker_id, Welcome(worker_id, peers))
        for other in self.workers:
            if other != worker_id:
                self._send_worker(other, PeerUpdate(peers))
        logger.info("worker %d registered at %s (%d cores)", worker_id, address, cores)

        if self.placement is None and len(self.workers) >= self.config.min_workers:
            self.placement = Placement(tuple(sorted(self.workers)[:self.config.min_workers]))
            self.epoch = self.epochs.epoch_for(self.placement)
            logger.info("serving with workers %s", list(self.placement.workers))
            self._pump()

    def worker_lost(self, worker_id: int) -> None:
        if worker_id not in self.workers:
            return
        del self.workers[worker_id]
        peers = {w: info['address'] for w, info in self.workers.items()}
        for other in self.workers:
            self._send_worker(other, PeerUpdate(peers))
        if self.placement is None or worker_id not in self.placement.workers:
            logger.info("spare worker %d left", worker_id)
            return

        logger.error("worker %d lost", worker_id)
        if self.store is not None and self.store.list_checkpoints():
            self._restore(None, lost={worker_id}, origin=DRIVER)
            return
        self._shrink({worker_id})
        self._fail_unit('WorkerLost', f"worker {worker_id} lost and no checkpoint exists", halt=True)

    def _shrink(self, lost: Set[int]) -> None:
        """Drop lost workers from the placement without restoring anything"""
        survivors = tuple(w for w in self.placement.workers if w not in lost)
        for worker in lost:
            self.directory.drop_worker(worker)
        if survivors:
            self.placement = Placement(survivors, self.placement.overrides)
            self.epoch = self.epochs.epoch_for(self.placement)
        else:
            self.placement = None

    @property
    def serving(self) -> bool:
        return self.placement is not None

    # -- transport helpers ------------------------------------------------

    def _send_worker(self, worker_id: int, message) -> None:
        name = type(message).__name__
        self.counters[f"controller->worker:{name}"] += 1
        unit = self._unit
        if unit is not None:
            unit.stats['c2w_msgs'] += 1
            if isinstance(message, ExecuteTask):
                unit.stats['c2w_task_msgs'] += 1
            elif isinstance(message, InvokeLocalTemplate):
                unit.stats['c2w_template_msgs'] += 1
            elif isinstance(message, InstallLocalTemplate):
                unit.stats['c2w_install_msgs'] += 1
            elif isinstance(message, PatchCopy):
                unit.stats['patch_copies'] += 1
        self.transport.to_worker(worker_id, message)

    def _reply(self, origin: str, message) -> None:
        if origin != DRIVER:
            logger.debug("%s reply %s", origin, type(message).__name__)
            return
        self.counters[f"controller->driver:{type(message).__name__}"] += 1
        self.transport.to_driver(message)

    def _halt_workers(self) -> None:
        for worker in sorted(self.workers):
            self._send_worker(worker, RestoreCmd(generation=self.generation))

    # -- unit plumbing ----------------------------------------------------

    def _wait(self, unit: _Unit, keys: Iterable[tuple], then: Callable[[], None]) -> None:
        unit.waiting |= set(keys)
        unit.then = then
        if not unit.waiting:
            unit.then = None
            then()

    def _resolve(self, key: tuple) -> bool:
        unit = self._unit
        if unit is None or key not in unit.waiting:
            return False
        unit.waiting.discard(key)
        if not unit.waiting and unit.then is not None:
            then, unit.then = unit.then, None
            then()
        return True

    def _finish_unit(self) -> None:
        self._unit = None
        self._pump()

    def _fail_unit(self, error: str, reason: str, halt: bool = False, origin: str = DRIVER) -> None:
        """
        Abort the running unit and report it

        Args:
            halt: also cancel whatever workers still have in flight
            origin: who to tell when no unit is running
        """
        unit = self._unit
        if unit is None:
            logger.error("%s: %s", error, reason)
            self._reply(origin, ErrorReply(error, reason, self.generation))
        else:
            logger.error("%s %s failed: %s: %s", unit.kind, unit.block, error, reason)
            if unit.kind in ('block', 'template'):
                if not unit.silent:
                    self._reply(unit.origin, BlockFailed(unit.block, error, reason, self.generation))
            else:
                self._reply(unit.origin, ErrorReply(error, reason, self.generation))
        self._unit = None
        self.last_key = None
        if halt:
            self._halt_workers()
        self._pump()

    def _new_unit(self, kind: str, origin: str, **kwargs) -> _Unit:
        unit = _Unit(kind=kind, origin=origin, started=self.clock(), **kwargs)
        unit.stats['generation'] = self.generation
        self._unit = unit
        return unit

    # -- driver-facing entry point ----------------------------------------

    def handle_driver(self, message, origin: str = DRIVER) -> None:
        self.counters[f"{origin}->controller:{type(message).__name__}"] += 1
        if isinstance(message, Hello):
            return
        if origin != DRIVER and hasattr(message, 'generation'):
            message.generation = self.generation
        self._deferred.append((origin, message))
        self._pump()

    def _pump(self) -> None:
        while self._deferred and self.serving:
            origin, message = self._deferred[0]
            generation = getattr(message, 'generation', self.generation)
            if generation < self.generation:
                self._deferred.popleft()
                logger.warning("dropping %s from generation %d", type(message).__name__, generation)
                continue
            unit = self._unit
            if unit is not None:
                if (unit.kind == 'block' and not unit.closed
                        and isinstance(message, (SpawnTask, BlockEnd))):
                    self._deferred.popleft()
                    unit.stats['d2c_msgs'] += 1
                    if isinstance(message, SpawnTask):
                        self._spawn(unit, message.task)
                    else:
                        self._end_block(unit, message)
                    continue
                return
            self._deferred.popleft()
            try:
                self._start(origin, message)
            except TemplumError as e:
                self._unit = None
                logger.error("cannot start %s: %s", type(message).__name__, e)
                self._reply(origin, ErrorReply(type(e).__name__, str(e), self.generation))

    def _start(self, origin: str, message) -> None:
        if isinstance(message, DefineObjects):
            self._define(origin, message)
        elif isinstance(message, BlockStart):
            self._start_block(origin, message.block, message.record)
        elif isinstance(message, SpawnTask):
            unit = self._start_block(origin, '', False)
            unit.silent = True
            self._spawn(unit, message.task)
            self._end_block(unit, BlockEnd(''))
        elif isinstance(message, BlockEnd):
            raise ProtocolError(f"BlockEnd for {message.block!r} without BlockStart")
        elif isinstance(message, InvokeTemplate):
            self._start_invoke(origin, message)
        elif isinstance(message, ReadObjects):
            unit = self._new_unit('read', origin)
            self._fetch(unit, message.ids, lambda: self._finish_read(unit))
        elif isinstance(message, RebalanceCmd):
            if not message.workers:
                raise RebalanceError("rebalance to an empty worker set")
            unknown = [w for w in message.workers if w not in self.workers]
            if unknown:
                raise RebalanceError(f"unknown workers {unknown}")
            self._start_rebalance(origin, Placement(tuple(message.workers)))
        elif isinstance(message, AutoRebalance):
            self._start_rebalance(INTERNAL, message.placement)
        elif isinstance(message, CheckpointCmd):
            self._start_checkpoint(origin, message)
        elif isinstance(message, RestoreCmd):
            self._restore(message.checkpoint_id or None, lost=set(), origin=origin)
        else:
            raise ProtocolError(f"unexpected driver message {type(message).__name__}")

    # -- objects ----------------------------------------------------------

    def home_of(self, partition: Optional[int]) -> int:
        return self.placement.home(partition)

    def _define(self, origin: str, message: DefineObjects) -> None:
        count = 0
        for spec in message.objects:
            object_id = int(spec['id'])
            partition = spec.get('partition')
            if object_id in self.directory:
                continue
            self.directory.register(object_id, {self.home_of(partition)}, 0, partition, spec.get('name', ''))
            count += 1
        logger.info("defined %d objects", count)
        self._reply(origin, Ack('DefineObjects', str(count), self.generation))

    def _fetch(self, unit: _Unit, ids: Iterable[int], then: Callable[[], None]) -> None:
        by_worker: Dict[int, List[int]] = defaultdict(list)
        for object_id in ids:
            if object_id in unit.values:
                continue
            holders = self.directory.holders(object_id) if object_id in self.directory else frozenset()
            if not holders:
                self._fail_unit('UnknownObjectError', f"object {object_id} is unknown or has no holder")
                return
            by_worker[min(holders)].append(object_id)
        keys = []
        for worker, objects in sorted(by_worker.items()):
            self._request += 1
            keys.append(('fetch', self._request, worker))
            self._send_worker(worker, FetchObjects(objects, self._request))
        self._wait(unit, keys, then)

    def _finish_read(self, unit: _Unit) -> None:
        self._reply(unit.origin, ObjectValues(dict(unit.values), 0, self.generation))
        self._finish_unit()

    # -- explicit blocks --------------------------------------------------

    def _start_block(self, origin: str, block: str, record: bool) -> _Unit:
        record = record and self.config.templates
        entry = self.directory.copy()
        unit = self._new_unit('block', origin, block=block, record=record,
                              mode='record' if record else 'explicit',
                              entry=entry, planner=Planner(entry.copy(), self.copy_ids.reserve))
        unit.stats['d2c_msgs'] += 1 if block else 0
        if record:
            unit.recorder = TemplateRecorder(block)
        self.last_key = None
        return unit

    def _spawn(self, unit: _Unit, task: Task) -> None:
        if unit.failed:
            return
        try:
            if task.kind is not TaskKind.COMPUTE or is_controller_id(task.id):
                raise InvocationError(f"driver may only spawn compute tasks with driver ids, got {task.id}")
            if task.id <= self.high_water:
                raise InvocationError(f"task id {task.id} is not fresh")
            self.high_water = task.id
            if unit.recorder is not None:
                unit.recorder.record_block_task(task)
            worker = assign_task(task, self.placement, unit.entry)
            self._dispatch(unit, unit.planner.place(task, worker))
            unit.stats['tasks'] += 1
        except TemplumError as e:
            unit.failed = (type(e).__name__, str(e))

    def _dispatch(self, unit: _Unit, tasks: List[Task]) -> None:
        for task in tasks:
            unit.dispatched[task.id] = task
            unit.waiting.add(('task', task.id))
            self._send_worker(task.assigned_worker, ExecuteTask(task))

    def _end_block(self, unit: _Unit, message: BlockEnd) -> None:
        if message.block != unit.block:
            unit.failed = unit.failed or ('ProtocolError', f"BlockEnd for {message.block!r} inside {unit.block!r}")
        unit.closed = True
        unit.readback = list(message.readback)
        if unit.record and self.config.loop_closure and not unit.failed:
            self._dispatch(unit, unit.planner.close_loop())
        self._wait(unit, (), lambda: self._block_executed(unit))

    def _block_executed(self, unit: _Unit) -> None:
        unit.stats['data_transfers'] += unit.planner.transfers
        unit.stats['workers'] = len({t.assigned_worker for t in unit.dispatched.values()})
        if unit.failed:
            self._fail_unit(*unit.failed)
            return
        if unit.record:
            self._install_recorded(unit)
        else:
            self._complete_block(unit)

    def _install_recorded(self, unit: _Unit) -> None:
        started = self.clock()
        ctemplate = unit.recorder.finalize()
        self.cache.add_controller(ctemplate)
        unit.stats['install_controller_us'] += (self.clock() - started) * 1e6

        assignment = assignment_for(ctemplate, self.placement, unit.entry)
        central, installs = generate_worker_templates(
            ctemplate, assignment, unit.entry, self.epoch, self.config.loop_closure)
        unit.stats['install_central_us'] += central.generation_us
        unit.stats['cache_misses'] += 1
        unit.stats['template_generations'] += 1
        unit.central = central
        for worker, message in installs.items():
            self._send_worker(worker, message)
        self._wait(unit, [('install', w, central.key) for w in installs],
                   lambda: self._recorded_installed(unit))

    def _recorded_installed(self, unit: _Unit) -> None:
        central = unit.central
        ctemplate = self.cache.controller_template(unit.block)
        if central.installed >= set(central.workers):
            self.cache.add_variant(central)
            if central.loop_closed:
                self.last_key = central.key
        else:
            logger.warning("install of %s incomplete; next invocation regenerates", central.key)
        self._reply(unit.origin, TemplateInstalled(unit.block, ctemplate.slot_count,
                                                   list(ctemplate.param_slots), self.generation))
        self._complete_block(unit)

    def _complete_block(self, unit: _Unit) -> None:
        if unit.silent:
            self._finish_unit()
            return
        self.invocations[unit.block] += 1
        self._fetch(unit, unit.readback, lambda: self._send_block_done(unit))

    def _send_block_done(self, unit: _Unit) -> None:
        stats = dict(unit.stats)
        stats['epoch'] = self.epoch
        stats['controller_us'] = (self.clock() - unit.started) * 1e6
        values = {o: unit.values[o] for o in unit.readback if o in unit.values}
        self._reply(unit.origin, BlockDone(unit.block, unit.mode, values, stats, self.generation))
        self._finish_unit()

    # -- template invocation ----------------------------------------------

    def _start_invoke(self, origin: str, message: InvokeTemplate) -> None:
        unit = self._new_unit('template', origin, block=message.block, mode='template',
                              readback=list(message.readback))
        unit.stats['d2c_msgs'] += 1
        try:
            if not self.config.templates:
                raise TemplateError("templates are disabled on this controller")
            ctemplate = self.cache.controller_template(message.block)
            ids = [int(t) for t in message.task_ids]
            if len(ids) != ctemplate.slot_count:
                raise InvocationError(f"block {message.block!r} has {ctemplate.slot_count} slots, got {len(ids)} ids")
            if len(message.params) != len(ctemplate.param_slots):
                raise InvocationError(
                    f"block {message.block!r} takes {len(ctemplate.param_slots)} params, got {len(message.params)}")
            if len(set(ids)) != len(ids) or any(t <= self.high_water or is_controller_id(t) for t in ids):
                raise InvocationError(f"stale or duplicate task ids for block {message.block!r}")
        except TemplumError as e:
            self._fail_unit(type(e).__name__, str(e))
            return
        if ids:
            self.high_water = max(ids)
        unit.stats['tasks'] = ctemplate.slot_count
        unit.context.update(ctemplate=ctemplate, ids=ids, params=list(message.params))

        selection = self.cache.select(message.block, self.epoch, self.directory,
                                      self.last_key, self.config.max_patch_copies)
        logger.debug("invoke %s: %s", message.block, selection.kind)
        unit.mode = selection.kind
        if selection.kind == 'generate':
            unit.stats['cache_misses'] += 1
            unit.stats['template_generations'] += 1
            assignment = assignment_for(ctemplate, self.placement, self.directory)
            central, installs = generate_worker_templates(
                ctemplate, assignment, self.directory, self.epoch, self.config.loop_closure)
            unit.stats['install_central_us'] += central.generation_us
            unit.central = central
            for worker, install in installs.items():
                self._send_worker(worker, install)
            self._wait(unit, [('install', w, central.key) for w in installs],
                       lambda: self._invoke_installed(unit))
            return

        unit.stats['cache_hits'] += 1
        unit.central = selection.template
        if selection.kind == 'patch':
            try:
                patch = validate_and_patch(selection.template, self.directory, self.copy_ids.reserve)
            except TemplumError as e:
                self._fail_unit(type(e).__name__, str(e))
                return
            logger.warning("patching %s with %d copies", selection.template.key, len(patch))
            for copy in patch:
                self._send_worker(copy.dst, copy)
            unit.context['patch'] = patch
            self._wait(unit, [('task', c.recv_id) for c in patch], lambda: self._patched(unit))
            return
        self._run_template(unit)

    def _invoke_installed(self, unit: _Unit) -> None:
        central = unit.central
        if central.installed >= set(central.workers):
            self.cache.add_variant(central)
            self._run_template(unit)
            return
        logger.warning("install of %s rejected; running %s explicitly", central.key, unit.block)
        self._run_explicit_fallback(unit)

    def _patched(self, unit: _Unit) -> None:
        apply_patch(self.directory, unit.context['patch'])
        self._run_template(unit)

    def _run_template(self, unit: _Unit) -> None:
        central = unit.central
        ctx = unit.context
        self._instance += 1
        instance = self._instance
        copy_base = self.copy_ids.reserve(max(central.copy_count, 1))
        messages = invoke(central, ctx['ctemplate'], ctx['ids'], ctx['params'], copy_base,
                          self.directory, instance, unit.readback)
        unit.stats['data_transfers'] += central.transfers
        unit.stats['workers'] = len(messages)
        for worker, message in messages.items():
            self._send_worker(worker, message)
        self.last_key = None
        self._wait(unit, [('template', w, instance) for w in messages],
                   lambda: self._template_finished(unit))

    def _template_finished(self, unit: _Unit) -> None:
        unit.central.apply_postconditions(self.directory)
        self.last_key = unit.central.key
        self.invocations[unit.block] += 1
        self._fetch(unit, unit.readback, lambda: self._send_block_done(unit))

    def _run_explicit_fallback(self, unit: _Unit) -> None:
        ctx = unit.context
        graph = ctx['ctemplate'].instantiate(ctx['ids'], ctx['params'])
        unit.mode = 'fallback'
        unit.kind = 'block'
        unit.entry = self.directory.copy()
        unit.planner = Planner(unit.entry.copy(), self.copy_ids.reserve)
        for task in graph:
            worker = assign_task(task, self.placement, unit.entry)
            self._dispatch(unit, unit.planner.place(task, worker))
        unit.closed = True
        self._wait(unit, (), lambda: self._block_executed(unit))

    # -- rebalance --------------------------------------------------------

    def _start_rebalance(self, origin: str, target: Placement) -> None:
        unit = self._new_unit('rebalance', origin)
        if target.signature() == self.placement.signature():
            self._reply(origin, RebalanceDone(self.epoch, list(target.workers), self.generation))
            self._finish_unit()
            return
        migrations = []
        active = set(target.workers)
        for object_id in self.directory:
            holders = self.directory.holders(object_id)
            partition = self.directory.partition(object_id)
            if partition is not None:
                destination = target.home(partition)
                if destination in holders:
                    continue
            elif holders & active:
                continue
            else:
                destination = target.lowest
            if not holders:
                self._fail_unit('UnrecoverableObjectError', f"object {object_id} has no live holder")
                return
            base = self.copy_ids.reserve(2)
            migrations.append(PatchCopy(object_id, self.directory.version(object_id),
                                        min(holders), destination, [base, base + 1]))
        unit.context.update(target=target, migrations=migrations)
        for copy in migrations:
            self._send_worker(copy.dst, copy)
        logger.info("rebalancing to %s with %d migrations", list(target.workers), len(migrations))
        self._wait(unit, [('task', c.recv_id) for c in migrations], lambda: self._rebalanced(unit))

    def _rebalanced(self, unit: _Unit) -> None:
        target = unit.context['target']
        apply_patch(self.directory, unit.context['migrations'])
        for worker in self.placement.workers:
            if worker not in target.workers:
                self.directory.drop_worker(worker)
        self.placement = target
        self.epoch = self.epochs.epoch_for(target)
        self.last_key = None
        self._reply(unit.origin, RebalanceDone(self.epoch, list(target.workers), self.generation))
        self._finish_unit()

    # -- checkpoint and restore -------------------------------------------

    def _start_checkpoint(self, origin: str, message: CheckpointCmd) -> None:
        if self.store is None:
            raise CheckpointIntegrityError("controller has no checkpoint directory")
        unit = self._new_unit('checkpoint', origin)
        folder = str(self.store.directory_for(message.checkpoint_id))
        params = json.dumps({'directory': folder}).encode('utf-8')
        versions = {}
        keys = []
        for object_id in self.directory:
            holders = self.directory.holders(object_id)
            if not holders:
                self._fail_unit('UnrecoverableObjectError', f"object {object_id} has no live holder")
                return
            version = self.directory.version(object_id)
            versions[object_id] = version
            task = Task(id=self.copy_ids.next(), kind=TaskKind.COMMIT, stage='commit',
                        reads=(object_id,), versions={object_id: version}, params=params,
                        assigned_worker=min(holders))
            keys.append(('task', task.id))
            self._send_worker(task.assigned_worker, ExecuteTask(task))
        unit.context.update(message=message, versions=versions)
        self._wait(unit, keys, lambda: self._checkpointed(unit))

    def _checkpointed(self, unit: _Unit) -> None:
        message = unit.context['message']
        try:
            self.store.write_manifest(message.checkpoint_id, unit.context['versions'],
                                      message.position, message.state)
        except CheckpointIntegrityError as e:
            self._fail_unit(type(e).__name__, str(e))
            return
        self.last_checkpoint = message.checkpoint_id
        self._reply(unit.origin, CheckpointDone(message.checkpoint_id, self.generation))
        self._finish_unit()

    def _restore(self, checkpoint_id: Optional[str], lost: Set[int], origin: str) -> None:
        try:
            if self.store is None:
                raise CheckpointIntegrityError("controller has no checkpoint directory")
            manifest = self.store.load(checkpoint_id) if checkpoint_id else self.store.latest()
            if manifest is None:
                raise CheckpointIntegrityError("no checkpoint to restore")
        except CheckpointIntegrityError as e:
            if lost:
                self._shrink(lost)
            self._fail_unit(type(e).__name__, str(e), halt=bool(lost), origin=origin)
            return

        survivors = tuple(w for w in self.placement.workers if w not in lost)
        if not survivors:
            self._fail_unit("UnrecoverableObjectError", "no surviving workers", halt=True, origin=origin)
            return
        self.generation += 1
        logger.warning("restoring checkpoint %s (generation %d)", manifest.checkpoint_id, self.generation)
        placement = Placement(survivors, self.placement.overrides)
        for worker in lost:
            self.directory.drop_worker(worker)

        shares: Dict[int, List[List[int]]] = defaultdict(list)
        for object_id, version, _ in manifest.objects:
            partition = self.directory.partition(object_id) if object_id in self.directory else None
            target = placement.home(partition)
            shares[target].append([object_id, version])
            if object_id in self.directory:
                self.directory.set_latest(object_id, version, {target})

        unit = self._new_unit('restore', origin)
        unit.context.update(manifest=manifest, placement=placement)
        folder = str(self.store.directory_for(manifest.checkpoint_id))
        for worker in placement.workers:
            self._send_worker(worker, RestoreCmd(manifest.checkpoint_id, folder, shares.get(worker, []),
                                                 self.generation))
        self._wait(unit, [('restore', w) for w in placement.workers], lambda: self._restored(unit))

    def _restored(self, unit: _Unit) -> None:
        manifest = unit.context['manifest']
        self.placement = unit.context['placement']
        self.epoch = self.epochs.epoch_for(self.placement)
        self.last_key = None
        self.last_checkpoint = manifest.checkpoint_id
        self._reply(DRIVER, Restored(manifest.checkpoint_id, manifest.position, manifest.state, self.generation))
        self._finish_unit()

    # -- worker-facing entry point ----------------------------------------

    def handle_worker(self, worker_id: int, message) -> None:
        self.counters[f"worker->controller:{type(message).__name__}"] += 1
        if isinstance(message, TaskDone):
            unit = self._unit
            if unit is not None:
                task = unit.dispatched.pop(message.task_id, None)
                if task is not None:
                    apply_writes(self.directory, task, worker_id)
            self._resolve(('task', message.task_id))
        elif isinstance(message, TemplateDone):
            if self._unit is not None and ('template', worker_id, message.instance) in self._unit.waiting:
                self._unit.values.update(message.values)
            self._resolve(('template', worker_id, message.instance))
        elif isinstance(message, InstallAck):
            unit = self._unit
            if unit is not None and unit.central is not None and unit.central.key == message.key:
                if message.ok:
                    unit.central.installed.add(worker_id)
                else:
                    logger.warning("worker %d rejected %s: %s", worker_id, message.key, message.reason)
                unit.stats['install_local_us'] = max(unit.stats['install_local_us'], message.elapsed_us)
            self._resolve(('install', worker_id, message.key))
        elif isinstance(message, ObjectValues):
            if self._unit is not None and ('fetch', message.request, worker_id) in self._unit.waiting:
                self._unit.values.update(message.values)
            self._resolve(('fetch', message.request, worker_id))
        elif isinstance(message, Ack):
            if message.command == 'RestoreCmd':
                self._resolve(('restore', worker_id))
        elif isinstance(message, Heartbeat):
            self._heartbeat(message)
        elif isinstance(message, WorkerFault):
            self._worker_fault(message)
        else:
            logger.warning("unexpected %s from worker %d", type(message).__name__, worker_id)

    def _heartbeat(self, message: Heartbeat) -> None:
        if message.window_ms > 0:
            self.busy_shares[message.worker] = message.busy_ms / message.window_ms
        if self.placement is None:
            return
        suggestion = self.monitor.observe(message, self.placement.workers)
        if suggestion is None or not self.config.auto_rebalance:
            return
        busiest, idlest = suggestion
        partitions = sorted({e.partition for e in self.directory.entries.values()
                             if e.partition is not None and self.placement.home(e.partition) == busiest})
        if not partitions:
            return
        target = self.placement.with_override(partitions[0], idlest)
        logger.info("moving partition %d from worker %d to %d", partitions[0], busiest, idlest)
        self._deferred.append((INTERNAL, AutoRebalance(target, self.generation)))
        self._pump()

    def _worker_fault(self, message: WorkerFault) -> None:
        logger.error("worker %d fault on task %d: %s: %s", message.worker, message.task_id,
                     message.error, message.reason)
        if self._unit is None:
            return
        if self._unit.kind == 'restore':
            if message.error == CheckpointIntegrityError.__name__:
                target = self._unit.context.get('placement')
                if target is not None:
                    self._shrink(set(self.placement.workers) - set(target.workers))
                self._fail_unit(message.error, message.reason, halt=True)
            return
        if (self.config.restore_on_fault and self.store is not None
                and self.store.list_checkpoints()):
            self._restore(None, lost=set(), origin=DRIVER)
            return
        self._fail_unit(message.error, message.reason, halt=True)

    # -- status -----------------------------------------------------------

    def status(self) -> dict:
        placement = self.placement
        active = list(placement.workers) if placement else []
        return {
            'serving': self.serving,
            'epoch': self.epoch,
            'generation': self.generation,
            'placement': placement.to_dict() if placement else None,
            'active_workers': active,
            'spare_workers': sorted(w for w in self.workers if w not in active),
            'workers': {str(w): info for w, info in sorted(self.workers.items())},
            'busy_shares': {str(w): round(s, 4) for w, s in sorted(self.busy_shares.items())},
            'busy': self._unit.kind if self._unit else None,
            'queued': len(self._deferred),
            'cache': self.cache.stats(),
            'invocations': dict(self.invocations),
            'last_checkpoint': self.last_checkpoint,
            'counters': dict(sorted(self.counters.items())),
        }
