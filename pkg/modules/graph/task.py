"""
Task definitions shared by the driver, controller and workers
"""

import base64
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Optional, Set, Tuple

from ..errors import GraphError


class TaskKind(str, Enum):
    COMPUTE = 'compute'
    SEND = 'send'
    RECEIVE = 'receive'
    COMMIT = 'commit'


def _ordered_unique(values: Iterable[int]) -> Tuple[int, ...]:
    seen = set()
    out = []
    for value in values:
        value = int(value)
        if value not in seen:
            seen.add(value)
            out.append(value)
    return tuple(out)


def _optional_int(value) -> Optional[int]:
    return None if value is None else int(value)


@dataclass
class Task:
    """
    One schedulable unit

    `reads` and `writes` keep their declaration order because kernels receive
    their buffers positionally; they never contain duplicates. `versions` maps
    an object to the version a read observes or a write produces, and is filled
    in by the controller when the task is bound to a worker.
    """

    id: int
    kind: TaskKind
    stage: str
    reads: Tuple[int, ...] = ()
    writes: Tuple[int, ...] = ()
    before: Set[int] = field(default_factory=set)
    params: bytes = b''
    assigned_worker: Optional[int] = None
    partition: Optional[int] = None
    versions: Dict[int, int] = field(default_factory=dict)
    peer: Optional[int] = None
    pair: Optional[int] = None

    def __post_init__(self):
        self.kind = TaskKind(self.kind)
        self.reads = _ordered_unique(self.reads)
        self.writes = _ordered_unique(self.writes)
        self.before = {int(dep) for dep in self.before}
        if self.id in self.before:
            raise GraphError(f"task {self.id} depends on itself")
        if self.kind is TaskKind.SEND and (len(self.reads) != 1 or self.writes):
            raise GraphError(f"send task {self.id} must read exactly one object and write none")
        if self.kind is TaskKind.RECEIVE and (len(self.writes) != 1 or self.reads):
            raise GraphError(f"receive task {self.id} must write exactly one object and read none")

    @property
    def is_copy(self) -> bool:
        return self.kind in (TaskKind.SEND, TaskKind.RECEIVE)

    @property
    def object(self) -> int:
        """The single object moved by a send or receive task"""
        if self.kind is TaskKind.SEND:
            return self.reads[0]
        if self.kind is TaskKind.RECEIVE:
            return self.writes[0]
        raise GraphError(f"task {self.id} is not a copy task")

    def read_version(self, object_id: int) -> Optional[int]:
        """Version this task expects to observe for a read, if bound"""
        version = self.versions.get(object_id)
        if version is None:
            return None
        return version - 1 if object_id in self.writes else version

    def to_dict(self) -> dict:
        return {
            'id': self.id,
            'kind': self.kind.value,
            'stage': self.stage,
            'reads': list(self.reads),
            'writes': list(self.writes),
            'before': sorted(self.before),
            'params': base64.b64encode(self.params).decode('ascii'),
            'assigned_worker': self.assigned_worker,
            'partition': self.partition,
            'versions': sorted([o, v] for o, v in self.versions.items()),
            'peer': self.peer,
            'pair': self.pair,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Task':
        return cls(
            id=int(data['id']),
            kind=TaskKind(data['kind']),
            stage=str(data['stage']),
            reads=tuple(int(o) for o in data.get('reads', ())),
            writes=tuple(int(o) for o in data.get('writes', ())),
            before={int(t) for t in data.get('before', ())},
            params=base64.b64decode(data.get('params', ''), validate=True),
            assigned_worker=_optional_int(data.get('assigned_worker')),
            partition=_optional_int(data.get('partition')),
            versions={int(o): int(v) for o, v in data.get('versions', ())},
            peer=_optional_int(data.get('peer')),
            pair=_optional_int(data.get('pair')),
        )
