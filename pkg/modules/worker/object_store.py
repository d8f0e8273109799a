"""
Worker-local object store
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

from ..errors import ExclusiveWriteError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StoredObject:
    version: int
    payload: bytes


class ObjectStore:
    """
    Latest version of every object this worker holds

    Payloads are immutable bytes; a write replaces the whole entry. An object
    never written reads as version 0 with an empty payload.
    """

    def __init__(self, debug_guards: bool = False):
        self._objects: Dict[int, StoredObject] = {}
        self.debug_guards = debug_guards
        self._readers: Dict[int, int] = {}
        self._writers: Dict[int, int] = {}

    def get(self, object_id: int) -> StoredObject:
        return self._objects.get(object_id, StoredObject(0, b''))

    def version(self, object_id: int) -> int:
        return self.get(object_id).version

    def payload(self, object_id: int) -> bytes:
        return self.get(object_id).payload

    def put(self, object_id: int, version: int, payload: bytes) -> None:
        self._objects[object_id] = StoredObject(version, bytes(payload))

    def __contains__(self, object_id: int) -> bool:
        return object_id in self._objects

    def __len__(self) -> int:
        return len(self._objects)

    def items(self) -> List[Tuple[int, StoredObject]]:
        return sorted(self._objects.items())

    def clear(self) -> None:
        self._objects.clear()
        self._readers.clear()
        self._writers.clear()

    # Exclusive-write guard: only active with debug_guards

    def acquire(self, task_id: int, reads: Iterable[int], writes: Iterable[int]) -> None:
        if not self.debug_guards:
            return
        reads, writes = list(reads), list(writes)
        for o in writes:
            if o in self._writers or self._readers.get(o):
                raise ExclusiveWriteError(f"task {task_id} writes object {o} while it is in use")
        for o in reads:
            if o in self._writers and o not in writes:
                raise ExclusiveWriteError(f"task {task_id} reads object {o} while task {self._writers[o]} writes it")
        for o in writes:
            self._writers[o] = task_id
        for o in reads:
            if o not in writes:
                self._readers[o] = self._readers.get(o, 0) + 1

    def release(self, task_id: int, reads: Iterable[int], writes: Iterable[int]) -> None:
        if not self.debug_guards:
            return
        writes = list(writes)
        for o in writes:
            if self._writers.get(o) == task_id:
                del self._writers[o]
        for o in reads:
            if o not in writes and self._readers.get(o):
                self._readers[o] -= 1
