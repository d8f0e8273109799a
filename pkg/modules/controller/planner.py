"""
Physical planning: bind logical tasks to workers and realize data movement

The planner walks a block's tasks in program order against a private copy of
the data directory. Every physical copy (object, worker) remembers its last
in-block writer and the tasks that accessed it since, which gives each
physical task dependencies that are all local to its worker.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, FrozenSet, List, Optional, Set, Tuple

from ..errors import UnrecoverableObjectError
from ..graph.directory import DataDirectory
from ..graph.task import Task, TaskKind
from ..graph.task_graph import TaskGraph

logger = logging.getLogger(__name__)

Copy = Tuple[int, int]


@dataclass
class _CopyState:
    last_writer: Optional[int] = None
    accessors: List[int] = field(default_factory=list)


@dataclass(frozen=True)
class Postcondition:
    """Exit state of one object relative to block entry"""

    delta: int
    holders: FrozenSet[int]
    replace: bool

    def apply(self, directory: DataDirectory, object_id: int) -> None:
        entry = directory.entry(object_id)
        entry.version += self.delta
        if self.replace:
            entry.holders = set(self.holders)
        else:
            entry.holders |= set(self.holders)

    def to_list(self) -> list:
        return [self.delta, sorted(self.holders), self.replace]


class SymbolicIds:
    """Copy-id source for template generation: ids count up from the slot count"""

    def __init__(self, start: int):
        self.start = start
        self._next = start

    @property
    def used(self) -> int:
        return self._next - self.start

    def reserve(self, count: int) -> int:
        base = self._next
        self._next += count
        return base


class Planner:
    """
    Args:
        directory: entry state; the planner mutates it, so pass a copy
        reserve_ids: `reserve(count) -> base` for send/recv id pairs
    """

    def __init__(self, directory: DataDirectory, reserve_ids: Callable[[int], int]):
        self.directory = directory
        self.entry_versions: Dict[int, int] = directory.versions()
        self.entry_holders: Dict[int, FrozenSet[int]] = {o: directory.holders(o) for o in directory}
        self.graph = TaskGraph()
        self.preconditions: Set[Copy] = set()
        self.touched: Set[int] = set()
        self.transfers = 0
        self._reserve = reserve_ids
        self._copies: Dict[Copy, _CopyState] = {}
        self._established: Set[Copy] = set()
        self._writer_worker: Dict[int, int] = {}
        self._placed: Dict[int, int] = {}

    def _copy(self, obj: int, worker: int) -> _CopyState:
        return self._copies.setdefault((obj, worker), _CopyState())

    def _source_for(self, obj: int) -> int:
        holders = self.directory.holders(obj)
        if not holders:
            raise UnrecoverableObjectError(obj)
        writer = self._writer_worker.get(obj)
        return writer if writer in holders else min(holders)

    def _require_entry_copy(self, obj: int, worker: int) -> None:
        if (obj, worker) not in self._established:
            self.preconditions.add((obj, worker))

    def _transfer(self, obj: int, dst: int) -> List[Task]:
        src = self._source_for(obj)
        self._require_entry_copy(obj, src)
        version = self.directory.version(obj)
        base = self._reserve(2)
        send_id, recv_id = base, base + 1

        src_copy = self._copy(obj, src)
        dst_copy = self._copy(obj, dst)
        send = Task(id=send_id, kind=TaskKind.SEND, stage='send', reads=(obj,),
                    before={src_copy.last_writer} if src_copy.last_writer is not None else set(),
                    assigned_worker=src, versions={obj: version}, peer=dst, pair=recv_id)
        recv_deps = set(dst_copy.accessors)
        if dst_copy.last_writer is not None:
            recv_deps.add(dst_copy.last_writer)
        recv = Task(id=recv_id, kind=TaskKind.RECEIVE, stage='receive', writes=(obj,),
                    before=recv_deps, assigned_worker=dst, versions={obj: version},
                    peer=src, pair=send_id)

        src_copy.accessors.append(send_id)
        dst_copy.last_writer = recv_id
        dst_copy.accessors = []
        self._established.add((obj, dst))
        self.directory.add_holder(obj, dst)
        self.graph.add(send)
        self.graph.add(recv)
        self.transfers += 1
        return [send, recv]

    def place(self, task: Task, worker: int) -> List[Task]:
        """
        Plan one logical task on `worker`

        Returns:
            the new physical tasks in dispatch order (transfers, then the task)
        """
        emitted: List[Task] = []
        deps: Set[int] = {d for d in task.before if self._placed.get(d) == worker}
        versions: Dict[int, int] = {}

        for obj in task.reads:
            self.directory.entry(obj)
            self.touched.add(obj)
            if self.directory.holds_latest(obj, worker):
                self._require_entry_copy(obj, worker)
            else:
                emitted.extend(self._transfer(obj, worker))
            state = self._copy(obj, worker)
            if state.last_writer is not None:
                deps.add(state.last_writer)
            versions[obj] = self.directory.version(obj)

        for obj in task.writes:
            self.directory.entry(obj)
            self.touched.add(obj)
            state = self._copy(obj, worker)
            if state.last_writer is not None:
                deps.add(state.last_writer)
            deps.update(a for a in state.accessors)
        deps.discard(task.id)

        physical = replace(task, before=deps, assigned_worker=worker, versions=versions)
        for obj in task.writes:
            version = self.directory.version(obj) + 1
            self.directory.set_latest(obj, version, {worker})
            physical.versions[obj] = version
            state = self._copy(obj, worker)
            state.last_writer = task.id
            state.accessors = []
            self._established.add((obj, worker))
            self._writer_worker[obj] = worker
        for obj in task.reads:
            if obj not in task.writes:
                self._copy(obj, worker).accessors.append(task.id)

        self._placed[task.id] = worker
        self.graph.add(physical)
        emitted.append(physical)
        return emitted

    def close_loop(self) -> List[Task]:
        """Copy every precondition object back to where block entry expects it"""
        emitted: List[Task] = []
        for obj, worker in sorted(self.preconditions):
            if not self.directory.holds_latest(obj, worker):
                emitted.extend(self._transfer(obj, worker))
        return emitted

    def ensure_copy(self, obj: int, worker: int) -> List[Task]:
        if self.directory.holds_latest(obj, worker):
            return []
        self.touched.add(obj)
        return self._transfer(obj, worker)

    def postconditions(self) -> Dict[int, Postcondition]:
        result = {}
        for obj in sorted(self.touched):
            delta = self.directory.version(obj) - self.entry_versions[obj]
            holders = self.directory.holders(obj)
            if delta:
                result[obj] = Postcondition(delta, holders, True)
            else:
                result[obj] = Postcondition(0, holders - self.entry_holders[obj], False)
        return result
