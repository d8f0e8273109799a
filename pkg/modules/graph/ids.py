"""
Identifier spaces

Compute task ids are allocated by the driver counting up from 1. Copy, commit
and other controller-created tasks draw from the high half of the 64-bit space
(top bit set) so the two allocators never collide without a handshake.
"""

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, List, Tuple

MAX_TASK_ID = (1 << 64) - 1
CONTROLLER_ID_BIT = 1 << 63


def is_controller_id(task_id: int) -> bool:
    """True for ids from the controller-owned range"""
    return bool(task_id & CONTROLLER_ID_BIT)


class TaskIdAllocator:
    """Driver-side allocator for compute task ids; never reuses an id"""

    def __init__(self, start: int = 1):
        if start < 1 or start >= CONTROLLER_ID_BIT:
            raise ValueError(f"driver ids must start in [1, 2^63), got {start}")
        self._next = start

    @property
    def last(self) -> int:
        """Highest id handed out so far (0 if none)"""
        return self._next - 1

    def next(self) -> int:
        task_id = self._next
        if task_id >= CONTROLLER_ID_BIT:
            raise OverflowError("driver task id space exhausted")
        self._next += 1
        return task_id

    def take(self, count: int) -> List[int]:
        return [self.next() for _ in range(count)]


class CopyIdAllocator:
    """Controller-side allocator for send/recv/commit task ids"""

    def __init__(self):
        self._next = CONTROLLER_ID_BIT + 1

    def next(self) -> int:
        task_id = self._next
        if task_id > MAX_TASK_ID:
            raise OverflowError("controller task id space exhausted")
        self._next += 1
        return task_id

    def reserve(self, count: int) -> int:
        """Reserve `count` consecutive ids and return the first one"""
        base = self._next
        if base + count - 1 > MAX_TASK_ID:
            raise OverflowError("controller task id space exhausted")
        self._next += count
        return base


@dataclass(frozen=True, order=True)
class TemplateKey:
    """(block, precondition signature, assignment epoch)"""

    block: str
    signature: str
    epoch: int

    def to_list(self) -> list:
        return [self.block, self.signature, self.epoch]

    @classmethod
    def from_list(cls, value) -> 'TemplateKey':
        block, signature, epoch = value
        return cls(str(block), str(signature), int(epoch))

    def __str__(self) -> str:
        return f"{self.block}@{self.epoch}#{self.signature}"


def precondition_signature(preconditions: Iterable[Tuple[int, int]]) -> str:
    """Hash of the sorted (object, worker) precondition list"""
    canonical = json.dumps(sorted([int(o), int(w)] for o, w in preconditions), separators=(',', ':'))
    return hashlib.sha1(canonical.encode('utf-8')).hexdigest()[:16]
