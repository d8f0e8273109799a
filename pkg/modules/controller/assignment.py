"""
Worker placement, assignment epochs and the locality assignment rule
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

from ..errors import RebalanceError
from ..graph.directory import DataDirectory
from ..graph.task import Task
from ..graph.task_graph import TaskGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Placement:
    """Active worker set plus per-partition home overrides"""

    workers: Tuple[int, ...]
    overrides: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        if not self.workers:
            raise RebalanceError("active worker set is empty")
        object.__setattr__(self, 'workers', tuple(sorted(set(self.workers))))
        object.__setattr__(self, 'overrides', tuple(sorted(
            (p, w) for p, w in self.overrides if w in self.workers)))

    @property
    def lowest(self) -> int:
        return self.workers[0]

    def home(self, partition: Optional[int]) -> int:
        """Home worker of a partition; singletons live on the lowest worker"""
        if partition is None:
            return self.lowest
        for p, w in self.overrides:
            if p == partition:
                return w
        return self.workers[partition % len(self.workers)]

    def signature(self) -> Tuple:
        return (self.workers, self.overrides)

    def with_override(self, partition: int, worker: int) -> 'Placement':
        kept = tuple((p, w) for p, w in self.overrides if p != partition)
        return Placement(self.workers, kept + ((partition, worker),))

    def to_dict(self) -> dict:
        return {'workers': list(self.workers), 'overrides': [list(o) for o in self.overrides]}


@dataclass
class EpochRegistry:
    """One epoch number per distinct placement, stable for the whole run"""

    epochs: Dict[Tuple, int] = field(default_factory=dict)

    def epoch_for(self, placement: Placement) -> int:
        sig = placement.signature()
        if sig not in self.epochs:
            self.epochs[sig] = len(self.epochs)
            logger.info("placement %s is epoch %d", list(placement.workers), self.epochs[sig])
        return self.epochs[sig]


def _majority(counts: Counter) -> Optional[int]:
    if not counts:
        return None
    best = max(counts.values())
    return min(w for w, c in counts.items() if c == best)


def assign_task(task: Task, placement: Placement, directory: DataDirectory) -> int:
    """
    Worker for one task given the directory at block entry

    A partitioned task follows the holders of the objects tagged with its
    partition, falling back to the partition's home. Other tasks go to the
    worker holding most of their reads (ties to the lowest id), or to the
    lowest active worker when none of their reads is held.
    """
    active = set(placement.workers)
    counts: Counter = Counter()
    if task.partition is not None:
        for obj in task.reads + task.writes:
            if obj in directory and directory.partition(obj) == task.partition:
                counts.update(w for w in directory.holders(obj) if w in active)
        chosen = _majority(counts)
        return chosen if chosen is not None else placement.home(task.partition)

    for obj in task.reads:
        if obj in directory:
            counts.update(w for w in directory.holders(obj) if w in active)
    chosen = _majority(counts)
    return chosen if chosen is not None else placement.lowest


def compute_assignment(graph: Union[TaskGraph, Iterable[Task]],
                       active_workers: Union[Placement, Sequence[int]],
                       directory: DataDirectory) -> Dict[int, int]:
    """Map every task id to a worker; deterministic for fixed inputs"""
    placement = active_workers if isinstance(active_workers, Placement) else Placement(tuple(active_workers))
    return {task.id: assign_task(task, placement, directory) for task in graph}
