"""
Controller-side data directory: latest version and holders of every object
"""

import copy
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from ..errors import UnknownObjectError
from .task import Task, TaskKind


@dataclass
class ObjectEntry:
    version: int = 0
    holders: Set[int] = field(default_factory=set)
    partition: Optional[int] = None
    name: str = ''


class DataDirectory:
    """Map object id -> (version, holders). Every holder stores the latest version."""

    def __init__(self):
        self.entries: Dict[int, ObjectEntry] = {}

    def register(self, object_id: int, holders: Iterable[int], version: int = 0,
                 partition: Optional[int] = None, name: str = '') -> ObjectEntry:
        entry = ObjectEntry(version=version, holders=set(holders), partition=partition, name=name)
        self.entries[int(object_id)] = entry
        return entry

    def entry(self, object_id: int) -> ObjectEntry:
        try:
            return self.entries[object_id]
        except KeyError:
            raise UnknownObjectError(object_id) from None

    def __contains__(self, object_id: int) -> bool:
        return object_id in self.entries

    def __iter__(self):
        return iter(sorted(self.entries))

    def version(self, object_id: int) -> int:
        return self.entry(object_id).version

    def holders(self, object_id: int) -> FrozenSet[int]:
        return frozenset(self.entry(object_id).holders)

    def partition(self, object_id: int) -> Optional[int]:
        return self.entry(object_id).partition

    def holds_latest(self, object_id: int, worker: int) -> bool:
        return worker in self.entry(object_id).holders

    def add_holder(self, object_id: int, worker: int) -> None:
        self.entry(object_id).holders.add(worker)

    def set_latest(self, object_id: int, version: int, holders: Iterable[int]) -> None:
        entry = self.entry(object_id)
        entry.version = version
        entry.holders = set(holders)

    def drop_worker(self, worker: int) -> List[int]:
        """Remove a worker from every holder set; return objects left without a holder"""
        orphaned = []
        for object_id, entry in self.entries.items():
            entry.holders.discard(worker)
            if not entry.holders:
                orphaned.append(object_id)
        return sorted(orphaned)

    def copy(self) -> 'DataDirectory':
        clone = DataDirectory()
        clone.entries = copy.deepcopy(self.entries)
        return clone

    def snapshot(self) -> Dict[int, Tuple[int, FrozenSet[int]]]:
        """Comparable (version, holders) view"""
        return {o: (e.version, frozenset(e.holders)) for o, e in self.entries.items()}

    def versions(self) -> Dict[int, int]:
        return {o: e.version for o, e in self.entries.items()}

    def to_dict(self) -> dict:
        return {
            str(o): {
                'name': e.name,
                'partition': e.partition,
                'version': e.version,
                'holders': sorted(e.holders),
            }
            for o, e in sorted(self.entries.items())
        }


def apply_writes(directory: DataDirectory, task: Task, worker: int) -> DataDirectory:
    """
    Record a completed task in the directory

    Compute writes move an object to the version the task produced (one past
    the current version when the task carries none) and reset its holders. A
    receive at the current version only adds the destination as a holder.
    Completions for versions older than the directory's are ignored, so the
    order in which workers report does not matter.
    """
    if task.kind in (TaskKind.SEND, TaskKind.COMMIT):
        for obj in task.reads:
            directory.entry(obj)
        return directory

    for obj in task.writes:
        entry = directory.entry(obj)
        if task.kind is TaskKind.RECEIVE:
            version = task.versions.get(obj, entry.version)
        else:
            version = task.versions.get(obj, entry.version + 1)
        if version > entry.version:
            entry.version = version
            entry.holders = {worker}
        elif version == entry.version:
            entry.holders.add(worker)
    return directory
