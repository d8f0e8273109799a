"""
Local half of a worker template

Each slot keeps its dependencies as indices into the worker's own slot list.
Compute slots take their ids from the invocation's id vector, copy slots from
the invocation's copy base plus a fixed offset, and versions are offsets from
the entry versions shipped with every invocation.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ..errors import InstallError, InvocationError
from ..graph.ids import TemplateKey
from ..graph.task import Task, TaskKind


@dataclass
class LocalSlot:
    kind: TaskKind
    stage: str
    reads: Tuple[int, ...] = ()
    writes: Tuple[int, ...] = ()
    deps: Tuple[int, ...] = ()
    compute_index: Optional[int] = None
    param_index: Optional[int] = None
    params: bytes = b''
    copy_offset: Optional[int] = None
    pair_offset: Optional[int] = None
    peer: Optional[int] = None
    partition: Optional[int] = None
    versions: Dict[int, int] = field(default_factory=dict)

    def to_list(self) -> list:
        return [
            self.kind.value, self.stage, list(self.reads), list(self.writes), list(self.deps),
            self.compute_index, self.param_index, self.params.hex(), self.copy_offset,
            self.pair_offset, self.peer, self.partition, sorted([o, v] for o, v in self.versions.items()),
        ]

    @classmethod
    def from_list(cls, row: Sequence) -> 'LocalSlot':
        (kind, stage, reads, writes, deps, compute_index, param_index, params,
         copy_offset, pair_offset, peer, partition, versions) = row
        return cls(TaskKind(kind), stage, tuple(reads), tuple(writes), tuple(deps),
                   compute_index, param_index, bytes.fromhex(params), copy_offset,
                   pair_offset, peer, partition, {int(o): int(v) for o, v in versions})


@dataclass
class LocalTemplate:
    key: TemplateKey
    worker: int
    slots: List[LocalSlot] = field(default_factory=list)
    pairing: List[Tuple[int, int, int, int]] = field(default_factory=list)

    @property
    def compute_count(self) -> int:
        return sum(1 for s in self.slots if s.compute_index is not None)

    @property
    def param_count(self) -> int:
        return sum(1 for s in self.slots if s.param_index is not None)

    def objects(self) -> List[int]:
        found = set()
        for slot in self.slots:
            found.update(slot.reads)
            found.update(slot.writes)
        return sorted(found)

    def validate(self, stages: Iterable[str]) -> None:
        """
        Check a freshly received template before caching it

        Raises:
            InstallError: unknown stage, cyclic deps, or an unpaired receive
        """
        known = set(stages)
        for index, slot in enumerate(self.slots):
            if slot.kind is TaskKind.COMPUTE and slot.stage not in known:
                raise InstallError(f"unknown stage {slot.stage!r} in slot {index}")
            for dep in slot.deps:
                if not 0 <= dep < len(self.slots) or dep == index:
                    raise InstallError(f"slot {index} has invalid dependency {dep}")
            if slot.kind is TaskKind.RECEIVE:
                matches = [p for p in self.pairing
                           if p[2] == self.worker and p[3] == slot.copy_offset]
                if len(matches) != 1 or matches[0][0] != slot.peer or matches[0][1] != slot.pair_offset:
                    raise InstallError(f"receive slot {index} has no unique matching send")
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        state = [0] * len(self.slots)
        for root in range(len(self.slots)):
            if state[root]:
                continue
            stack = [(root, iter(self.slots[root].deps))]
            state[root] = 1
            while stack:
                node, deps = stack[-1]
                for dep in deps:
                    if state[dep] == 1:
                        raise InstallError(f"dependency cycle through slot {dep}")
                    if state[dep] == 0:
                        state[dep] = 1
                        stack.append((dep, iter(self.slots[dep].deps)))
                        break
                else:
                    state[node] = 2
                    stack.pop()

    def instantiate(self, task_ids: Sequence[int], params: Sequence[bytes], copy_base: int,
                    base_versions: Dict[int, int]) -> List[Task]:
        """Fill in fresh ids, parameters and versions; one pass over the slots"""
        if len(task_ids) != self.compute_count:
            raise InvocationError(f"{self.key}: expected {self.compute_count} task ids, got {len(task_ids)}")
        if len(params) != self.param_count:
            raise InvocationError(f"{self.key}: expected {self.param_count} params, got {len(params)}")

        ids = []
        for slot in self.slots:
            if slot.compute_index is not None:
                ids.append(int(task_ids[slot.compute_index]))
            else:
                ids.append(copy_base + slot.copy_offset)

        tasks = []
        for index, slot in enumerate(self.slots):
            try:
                versions = {o: base_versions[o] + off for o, off in slot.versions.items()}
            except KeyError as e:
                raise InvocationError(f"{self.key}: no base version for object {e.args[0]}") from None
            tasks.append(Task(
                id=ids[index],
                kind=slot.kind,
                stage=slot.stage,
                reads=slot.reads,
                writes=slot.writes,
                before={ids[d] for d in slot.deps},
                params=params[slot.param_index] if slot.param_index is not None else slot.params,
                assigned_worker=self.worker,
                partition=slot.partition,
                versions=versions,
                peer=slot.peer,
                pair=copy_base + slot.pair_offset if slot.pair_offset is not None else None,
            ))
        return tasks

    def to_dict(self) -> dict:
        return {
            'worker': self.worker,
            'slots': [s.to_list() for s in self.slots],
            'pairing': [list(p) for p in self.pairing],
        }

    @classmethod
    def from_dict(cls, key: TemplateKey, data: dict) -> 'LocalTemplate':
        return cls(
            key=key,
            worker=int(data['worker']),
            slots=[LocalSlot.from_list(row) for row in data.get('slots', [])],
            pairing=[tuple(p) for p in data.get('pairing', [])],
        )
