"""
Task graphs and the pure scheduling helpers built on them
"""

from typing import Dict, Iterable, Iterator, List, Optional, Set, Tuple

from ..errors import (
    CycleError,
    DanglingDependencyError,
    ExclusiveWriteError,
    GraphError,
    TransferError,
)
from .ids import CopyIdAllocator
from .task import Task, TaskKind


class TaskGraph:
    """
    Ordered collection of tasks indexed by id

    `external` lists ids of tasks from earlier blocks; they are treated as
    already completed by `ready_tasks` and are legal targets of `before` edges.
    """

    def __init__(self, tasks: Iterable[Task] = (), external: Iterable[int] = ()):
        self.tasks: List[Task] = []
        self.index: Dict[int, int] = {}
        self.external: Set[int] = set(int(t) for t in external)
        for task in tasks:
            self.add(task)

    def add(self, task: Task) -> Task:
        if task.id in self.index:
            raise GraphError(f"duplicate task id {task.id}")
        self.index[task.id] = len(self.tasks)
        self.tasks.append(task)
        return task

    def get(self, task_id: int) -> Task:
        try:
            return self.tasks[self.index[task_id]]
        except KeyError:
            raise GraphError(f"task {task_id} not in graph") from None

    def remove(self, task_id: int) -> Task:
        task = self.get(task_id)
        del self.tasks[self.index[task_id]]
        self.index = {t.id: i for i, t in enumerate(self.tasks)}
        return task

    def ids(self) -> List[int]:
        return [t.id for t in self.tasks]

    def __contains__(self, task_id: int) -> bool:
        return task_id in self.index

    def __iter__(self) -> Iterator[Task]:
        return iter(self.tasks)

    def __len__(self) -> int:
        return len(self.tasks)


def find_cycle(graph: TaskGraph) -> Optional[List[int]]:
    """Return one witness cycle in program order, or None if the graph is a DAG"""
    white, grey, black = 0, 1, 2
    color = {t.id: white for t in graph}

    for root in graph.ids():
        if color[root] != white:
            continue
        stack: List[Tuple[int, Iterator[int]]] = [(root, iter(sorted(graph.get(root).before)))]
        path = [root]
        color[root] = grey
        while stack:
            node, deps = stack[-1]
            advanced = False
            for dep in deps:
                if dep not in color:
                    continue  # external or dangling; not part of any cycle
                if color[dep] == grey:
                    return path[path.index(dep):]
                if color[dep] == white:
                    color[dep] = grey
                    path.append(dep)
                    stack.append((dep, iter(sorted(graph.get(dep).before))))
                    advanced = True
                    break
            if not advanced:
                color[node] = black
                stack.pop()
                path.pop()
    return None


def validate_dag(graph: TaskGraph) -> bool:
    """
    Check that every dependency resolves and the `before` edges are acyclic

    Raises:
        DanglingDependencyError: a dependency is neither in the graph nor external
        CycleError: the edges contain a cycle; carries one witness
    """
    for task in graph:
        for dep in task.before:
            if dep not in graph and dep not in graph.external:
                raise DanglingDependencyError(task.id, dep)
    cycle = find_cycle(graph)
    if cycle is not None:
        raise CycleError(cycle)
    return True


def topological_order(graph: TaskGraph) -> List[int]:
    """Kahn order, ties broken by program order"""
    validate_dag(graph)
    order = []
    done: Set[int] = set()
    while len(order) < len(graph):
        batch = [t.id for t in graph if t.id not in done
                 and all(d in done or d in graph.external for d in t.before)]
        order.extend(batch)
        done.update(batch)
    return order


def _ancestors(graph: TaskGraph) -> Dict[int, Set[int]]:
    result: Dict[int, Set[int]] = {}
    for task_id in topological_order(graph):
        acc: Set[int] = set()
        for dep in graph.get(task_id).before:
            if dep in graph:
                acc.add(dep)
                acc |= result[dep]
        result[task_id] = acc
    return result


def check_exclusive_writes(graph: TaskGraph) -> None:
    """
    Raise ExclusiveWriteError if two writers of one object copy are unordered

    Writers on different workers touch different physical copies, so only
    tasks sharing an assigned worker (or both unassigned) are compared.
    """
    ancestors = _ancestors(graph)
    writers: Dict[Tuple[int, Optional[int]], List[int]] = {}
    for task in graph:
        for obj in task.writes:
            writers.setdefault((obj, task.assigned_worker), []).append(task.id)
    for (obj, _), ids in writers.items():
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                if a not in ancestors[b] and b not in ancestors[a]:
                    raise ExclusiveWriteError(f"tasks {a} and {b} both write object {obj} unordered")


def ready_tasks(graph: TaskGraph, completed: Set[int], arrived: Set[int]) -> Set[int]:
    """
    Tasks whose dependencies are all complete

    Receive tasks additionally need their payload in `arrived`.
    """
    ready = set()
    for task in graph:
        if task.id in completed:
            continue
        if not all(dep in completed or dep in graph.external for dep in task.before):
            continue
        if task.kind is TaskKind.RECEIVE and task.id not in arrived:
            continue
        ready.add(task.id)
    return ready


def insert_transfer_pair(graph: TaskGraph, producer: int, producer_worker: int,
                         consumer: int, consumer_worker: int, obj: int,
                         allocator: CopyIdAllocator) -> Tuple[Task, Task]:
    """
    Realize a cross-worker data edge with a send/recv pair

    Args:
        producer: id of the task writing `obj` (in the graph or external)
        consumer: id of the task reading `obj`; gains the recv as a dependency
        allocator: controller copy-id space; ids are reserved as a pair

    Returns:
        (send, recv) tasks, both added to the graph
    """
    if producer_worker == consumer_worker:
        raise TransferError(f"producer {producer} and consumer {consumer} share worker {producer_worker}")
    if producer in graph and obj not in graph.get(producer).writes:
        raise TransferError(f"task {producer} does not write object {obj}")
    consumer_task = graph.get(consumer)
    if obj not in consumer_task.reads:
        raise TransferError(f"task {consumer} does not read object {obj}")

    base = allocator.reserve(2)
    send_id, recv_id = base, base + 1
    versions = {}
    if producer in graph and obj in graph.get(producer).versions:
        versions = {obj: graph.get(producer).versions[obj]}

    send = Task(id=send_id, kind=TaskKind.SEND, stage='send', reads=(obj,),
                before={producer}, assigned_worker=producer_worker,
                versions=dict(versions), peer=consumer_worker, pair=recv_id)
    recv = Task(id=recv_id, kind=TaskKind.RECEIVE, stage='receive', writes=(obj,),
                assigned_worker=consumer_worker, versions=dict(versions),
                peer=producer_worker, pair=send_id)
    graph.add(send)
    graph.add(recv)
    consumer_task.before.add(recv_id)
    return send, recv
