"""
Driver API

    client = DriverClient(channel, config)
    with client.block('lr.optimize', readback=[gnorm]) as blk:
        blk.stage(gradient, partitions)
        blk.spawn('Reduce', reads=[coeff, *grads], writes=[coeff, gnorm], params=...)
    gnorm_bytes = blk.handle.result().value(gnorm)

The first execution of a block streams its tasks and asks the controller to
record them; once the controller reports the template installed, later
executions send a single InvokeTemplate with fresh ids and parameters.
"""

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Optional, Sequence

from ..errors import BlockFailedError, BlockShapeError, DriverError, RestartFromCheckpoint
from ..graph.ids import TaskIdAllocator
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
    InvokeTemplate,
    ObjectValues,
    ReadObjects,
    RebalanceCmd,
    RebalanceDone,
    RestoreCmd,
    Restored,
    Shutdown,
    SpawnTask,
    TemplateInstalled,
)
from ..utils.config import DriverConfig
from .channel import Channel
from .stages import ObjectTable, StageSpec

logger = logging.getLogger(__name__)

REPLY_TYPES = (Ack, ObjectValues, RebalanceDone, CheckpointDone)


@dataclass
class BlockHandle:
    """Outcome of one block execution, filled in when BlockDone arrives"""

    client: 'DriverClient'
    block: str
    sent_at: float
    mode: str = ''
    values: Dict[int, bytes] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    done: bool = False
    wall_s: float = 0.0

    def result(self) -> 'BlockHandle':
        self.client.wait_for(self)
        return self

    def value(self, object_id: int) -> bytes:
        self.result()
        return self.values[object_id]


@dataclass
class _Recorded:
    shape: List[tuple]
    param_slots: List[int]
    installed: bool = False


def block_shape(tasks: Sequence[Task]) -> List[tuple]:
    position = {t.id: i for i, t in enumerate(tasks)}
    return [(t.stage, t.reads, t.writes, t.partition,
             tuple(sorted(position[d] for d in t.before if d in position)))
            for t in tasks]


class Block:
    """An open basic block; tasks are streamed or buffered depending on the mode"""

    def __init__(self, client: 'DriverClient', block_id: str, readback: Sequence[int], templated: bool):
        self.client = client
        self.block_id = block_id
        self.readback = list(readback)
        self.templated = templated
        self.tasks: List[Task] = []
        self.handle: Optional[BlockHandle] = None

    def spawn(self, stage: str, reads: Iterable[int] = (), writes: Iterable[int] = (),
              before: Iterable[int] = (), params: bytes = b'', partition: Optional[int] = None) -> int:
        task = Task(id=self.client.ids.next(), kind=TaskKind.COMPUTE, stage=stage,
                    reads=tuple(reads), writes=tuple(writes), before=set(before),
                    params=params, partition=partition)
        self.tasks.append(task)
        if not self.templated:
            self.client._send(SpawnTask(task, self.client.generation))
        return task.id

    def stage(self, spec: StageSpec, partitions: int, before: Iterable[int] = ()) -> List[int]:
        """Spawn one task per partition of a stage"""
        before = list(before)
        return [self.spawn(spec.name, reads, writes, before, params, partition)
                for reads, writes, partition, params in spec.expand(self.client.objects, partitions)]

    def __enter__(self) -> 'Block':
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        self.client._close_block(self, failed=exc_type is not None)
        return False


class DriverClient:
    """
    Args:
        channel: link to the controller
        config: driver section of the settings
    """

    def __init__(self, channel: Channel, config: Optional[DriverConfig] = None):
        self.channel = channel
        self.config = config or DriverConfig()
        self.templates = self.config.templates
        self.ids = TaskIdAllocator()
        self.objects = ObjectTable()
        self.generation = 0
        self.recorded: Dict[str, _Recorded] = {}
        self._open: Optional[Block] = None
        self._outstanding: Deque[BlockHandle] = deque()
        self._replies: Deque[object] = deque()
        self._defined = 0

    # -- messaging ---------------------------------------------------------

    def _send(self, message) -> None:
        self.channel.send(message)

    def _pump_one(self) -> None:
        message = self.channel.receive(self.config.reply_timeout_s)
        generation = getattr(message, 'generation', self.generation)
        if isinstance(message, Restored):
            self.generation = message.generation
            self._outstanding.clear()
            self._replies.clear()
            self._open = None
            logger.warning("controller restored checkpoint %s", message.checkpoint_id)
            raise RestartFromCheckpoint(message.checkpoint_id, message.position, message.state,
                                        message.generation)
        if generation < self.generation:
            logger.debug("ignoring %s from generation %d", type(message).__name__, generation)
            return
        if isinstance(message, BlockDone):
            if not self._outstanding:
                raise DriverError(f"unexpected BlockDone for {message.block!r}")
            handle = self._outstanding.popleft()
            handle.mode = message.mode
            handle.values = dict(message.values)
            handle.stats = dict(message.stats)
            handle.wall_s = time.perf_counter() - handle.sent_at
            handle.done = True
        elif isinstance(message, TemplateInstalled):
            recorded = self.recorded.get(message.block)
            if recorded is not None:
                recorded.installed = True
                if message.param_slots != recorded.param_slots:
                    logger.warning("controller recorded param slots %s for %s, driver expected %s",
                                   message.param_slots, message.block, recorded.param_slots)
            logger.info("template installed for %s (%d slots)", message.block, message.slot_count)
        elif isinstance(message, BlockFailed):
            self.generation = max(self.generation, message.generation)
            self._outstanding.clear()
            raise BlockFailedError(message.block, message.error, message.reason)
        elif isinstance(message, ErrorReply):
            raise DriverError(f"{message.error}: {message.reason}")
        elif isinstance(message, REPLY_TYPES):
            self._replies.append(message)
        else:
            logger.warning("driver ignoring %s", type(message).__name__)

    def wait_for(self, handle: BlockHandle) -> None:
        while not handle.done:
            self._pump_one()

    def _await_reply(self, kind):
        while True:
            while self._replies:
                reply = self._replies.popleft()
                if isinstance(reply, kind):
                    return reply
                logger.debug("discarding unexpected %s", type(reply).__name__)
            self._pump_one()

    def flush(self) -> None:
        """Wait for every outstanding block"""
        while self._outstanding:
            self._pump_one()

    # -- objects ------------------------------------------------------------

    def define_objects(self) -> int:
        """Register every object defined in the table since the last call"""
        specs = self.objects.specs[self._defined:]
        self._defined = len(self.objects.specs)
        self._send(DefineObjects([s.to_dict() for s in specs], self.generation))
        self._await_reply(Ack)
        return len(specs)

    def read_objects(self, ids: Iterable[int]) -> Dict[int, bytes]:
        self._send(ReadObjects(list(ids), self.generation))
        return dict(self._await_reply(ObjectValues).values)

    # -- blocks -------------------------------------------------------------

    def block(self, block_id: str, readback: Sequence[int] = ()) -> Block:
        if self._open is not None:
            raise DriverError(f"block {block_id!r} opened while {self._open.block_id!r} is still open")
        recorded = self.recorded.get(block_id)
        templated = self.templates and recorded is not None and recorded.installed
        blk = Block(self, block_id, readback, templated)
        self._open = blk
        if not templated:
            self._send(BlockStart(block_id, self.templates and recorded is None, self.generation))
        return blk

    def _close_block(self, blk: Block, failed: bool) -> None:
        self._open = None
        if blk.templated:
            if failed:
                return
            recorded = self.recorded[blk.block_id]
            if block_shape(blk.tasks) != recorded.shape:
                raise BlockShapeError(f"block {blk.block_id!r} spawned a different task structure than it recorded")
            params = [blk.tasks[i].params for i in recorded.param_slots]
            message = InvokeTemplate(blk.block_id, [t.id for t in blk.tasks], params, blk.readback, self.generation)
        else:
            message = BlockEnd(blk.block_id, blk.readback, self.generation)
            if self.templates and blk.block_id not in self.recorded and not failed:
                self.recorded[blk.block_id] = _Recorded(block_shape(blk.tasks), list(range(len(blk.tasks))))

        blk.handle = BlockHandle(self, blk.block_id, time.perf_counter())
        self._outstanding.append(blk.handle)
        self._send(message)
        if failed:
            return
        if not blk.templated:
            self.wait_for(blk.handle)
        while len(self._outstanding) > self.config.pipeline_depth:
            self.wait_for(self._outstanding[0])

    # -- cluster commands ----------------------------------------------------

    def rebalance(self, workers: Sequence[int]) -> RebalanceDone:
        self.flush()
        self._send(RebalanceCmd(list(workers), self.generation))
        reply = self._await_reply(RebalanceDone)
        logger.info("rebalanced to %s (epoch %d)", reply.workers, reply.epoch)
        return reply

    def checkpoint(self, checkpoint_id: str, position: dict, state: dict) -> CheckpointDone:
        self.flush()
        self._send(CheckpointCmd(checkpoint_id, position, state, self.generation))
        return self._await_reply(CheckpointDone)

    def restore(self, checkpoint_id: str = '') -> None:
        """Ask for a restore; always ends in RestartFromCheckpoint"""
        self.flush()
        self._send(RestoreCmd(checkpoint_id, generation=self.generation))
        while True:
            self._pump_one()

    def shutdown(self, reason: str = '') -> None:
        try:
            self.flush()
        finally:
            self._send(Shutdown(reason))
            self.channel.close()
