"""
Logical objects and stage specifications

Object patterns name logical objects: `coeff` is a singleton, `grad[p]` the
instance of `grad` for the current partition and `grad[*]` every instance in
partition order.
"""

import re
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from ..errors import DriverError

_PATTERN = re.compile(r'^(?P<name>[A-Za-z_][\w.]*)(?:\[(?P<index>p|\*|\d+)\])?$')


@dataclass
class ObjectSpec:
    id: int
    name: str
    partition: Optional[int] = None

    def to_dict(self) -> dict:
        return {'id': self.id, 'name': self.name, 'partition': self.partition}


class ObjectTable:
    """Logical object ids by name; partitioned objects have one id per partition"""

    def __init__(self, first_id: int = 1):
        self._next = first_id
        self.specs: List[ObjectSpec] = []
        self._singletons: Dict[str, int] = {}
        self._partitioned: Dict[str, List[int]] = {}

    def define(self, name: str, partitions: Optional[int] = None) -> Union[int, List[int]]:
        if name in self._singletons or name in self._partitioned:
            raise DriverError(f"object {name!r} is already defined")
        if partitions is None:
            self._singletons[name] = self._add(name, None)
            return self._singletons[name]
        ids = [self._add(f"{name}[{p}]", p) for p in range(partitions)]
        self._partitioned[name] = ids
        return ids

    def _add(self, name: str, partition: Optional[int]) -> int:
        spec = ObjectSpec(self._next, name, partition)
        self._next += 1
        self.specs.append(spec)
        return spec.id

    def __getitem__(self, key) -> Union[int, List[int]]:
        if isinstance(key, tuple):
            name, partition = key
            return self._partitioned[name][partition]
        if key in self._singletons:
            return self._singletons[key]
        return list(self._partitioned[key])

    def resolve(self, pattern: str, partition: Optional[int] = None) -> List[int]:
        match = _PATTERN.match(pattern)
        if not match:
            raise DriverError(f"bad object pattern {pattern!r}")
        name, index = match.group('name'), match.group('index')
        if index is None:
            if name not in self._singletons:
                raise DriverError(f"{name!r} is not a singleton object")
            return [self._singletons[name]]
        if name not in self._partitioned:
            raise DriverError(f"{name!r} is not a partitioned object")
        ids = self._partitioned[name]
        if index == '*':
            return list(ids)
        if index == 'p':
            if partition is None:
                raise DriverError(f"pattern {pattern!r} needs a partition")
            return [ids[partition]]
        return [ids[int(index)]]


@dataclass
class StageSpec:
    """
    One stage: a task per partition, or a single task when `partitioned` is off

    Args:
        name: stage (kernel) name
        reads / writes: object patterns, resolved per partition
        params: bytes, or a callable taking the partition (None for singletons)
    """

    name: str
    reads: Sequence[str] = ()
    writes: Sequence[str] = ()
    params: Union[bytes, Callable[[Optional[int]], bytes]] = b''
    partitioned: bool = True
    home_partition: Optional[int] = None

    def expand(self, objects: ObjectTable, partitions: int) -> List[Tuple[List[int], List[int], Optional[int], bytes]]:
        """(reads, writes, partition, params) per task, in partition order"""
        targets: Iterable[Optional[int]] = range(partitions) if self.partitioned else [None]
        tasks = []
        for p in targets:
            reads = [o for pattern in self.reads for o in objects.resolve(pattern, p)]
            writes = [o for pattern in self.writes for o in objects.resolve(pattern, p)]
            params = self.params(p) if callable(self.params) else self.params
            tasks.append((reads, writes, p if self.partitioned else self.home_partition, params))
        return tasks
