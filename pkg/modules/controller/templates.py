"""
Controller templates, worker templates and template selection

A controller template is the block's task graph with ids replaced by slot
positions. A worker template binds that graph to one placement and entry
state: its central half (kept here) knows every worker's slot list, the copy
tasks, and the pre- and postconditions; its local halves are shipped to the
workers and cached there.
"""

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from ..errors import InvocationError, UnknownBlockError, UnrecoverableObjectError
from ..graph.directory import DataDirectory
from ..graph.ids import TemplateKey, precondition_signature
from ..graph.task import Task, TaskKind
from ..graph.task_graph import TaskGraph
from ..protocol.messages import InstallLocalTemplate, InvokeLocalTemplate, PatchCopy
from ..worker.local_template import LocalSlot, LocalTemplate
from .assignment import Placement, compute_assignment
from .planner import Planner, Postcondition, SymbolicIds

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlotRecord:
    kind: TaskKind
    stage: str
    reads: Tuple[int, ...]
    writes: Tuple[int, ...]
    dep_indices: Tuple[int, ...]
    external_deps: Tuple[int, ...]
    partition: Optional[int]
    params: bytes = b''


@dataclass
class ControllerTemplate:
    """Parameterized task graph of one basic block"""

    block: str
    slots: List[SlotRecord] = field(default_factory=list)
    param_slots: List[int] = field(default_factory=list)

    @property
    def slot_count(self) -> int:
        return len(self.slots)

    def shape(self) -> List[tuple]:
        return [(s.stage, s.reads, s.writes, s.partition, s.dep_indices) for s in self.slots]

    def instantiate(self, task_ids: Sequence[int], params: Sequence[bytes]) -> TaskGraph:
        """
        Build the concrete graph for one invocation

        Args:
            task_ids: one fresh id per slot
            params: one payload per parameter slot, in slot order

        Raises:
            InvocationError: wrong id or param count, or a duplicate id
        """
        if len(task_ids) != self.slot_count:
            raise InvocationError(f"block {self.block!r} has {self.slot_count} slots, got {len(task_ids)} ids")
        if len(params) != len(self.param_slots):
            raise InvocationError(f"block {self.block!r} takes {len(self.param_slots)} params, got {len(params)}")
        if len(set(task_ids)) != len(task_ids):
            raise InvocationError(f"duplicate task ids in invocation of {self.block!r}")

        slot_params = dict(zip(self.param_slots, params))
        graph = TaskGraph()
        for index, slot in enumerate(self.slots):
            graph.external.update(slot.external_deps)
            graph.add(Task(
                id=int(task_ids[index]),
                kind=slot.kind,
                stage=slot.stage,
                reads=slot.reads,
                writes=slot.writes,
                before={int(task_ids[d]) for d in slot.dep_indices} | set(slot.external_deps),
                params=slot_params.get(index, slot.params),
                partition=slot.partition,
            ))
        return graph


class TemplateRecorder:
    """Accumulates the tasks of a block while it runs explicitly"""

    def __init__(self, block: str):
        self.block = block
        self.tasks: List[Task] = []

    def record_block_task(self, task: Task) -> None:
        self.tasks.append(task)

    def finalize(self) -> ControllerTemplate:
        position = {t.id: i for i, t in enumerate(self.tasks)}
        slots = []
        param_slots = []
        for index, task in enumerate(self.tasks):
            internal = tuple(sorted(position[d] for d in task.before if d in position))
            external = tuple(sorted(d for d in task.before if d not in position))
            if task.kind is TaskKind.COMPUTE:
                param_slots.append(index)
            slots.append(SlotRecord(task.kind, task.stage, task.reads, task.writes,
                                    internal, external, task.partition))
        return ControllerTemplate(self.block, slots, param_slots)


@dataclass
class WorkerTemplateCentral:
    key: TemplateKey
    slot_count: int
    per_worker: Dict[int, LocalTemplate]
    compute_slots: Dict[int, List[int]]
    param_slots: Dict[int, List[int]]
    preconditions: FrozenSet[Tuple[int, int]]
    postconditions: Dict[int, Postcondition]
    copy_count: int
    transfers: int
    loop_closed: bool
    generation_us: float = 0.0
    installed: Set[int] = field(default_factory=set)

    @property
    def workers(self) -> List[int]:
        return sorted(w for w, t in self.per_worker.items() if t.slots)

    def exit_holders(self, directory: DataDirectory, object_id: int) -> FrozenSet[int]:
        post = self.postconditions.get(object_id)
        if post is None:
            return directory.holders(object_id)
        if post.replace:
            return post.holders
        return directory.holders(object_id) | post.holders

    def apply_postconditions(self, directory: DataDirectory) -> None:
        for object_id, post in self.postconditions.items():
            post.apply(directory, object_id)

    def unsatisfied(self, directory: DataDirectory) -> List[Tuple[int, int]]:
        return [(o, w) for o, w in sorted(self.preconditions) if not directory.holds_latest(o, w)]

    def install_messages(self) -> Dict[int, InstallLocalTemplate]:
        return {w: InstallLocalTemplate(self.key, self.per_worker[w].to_dict()) for w in self.workers}


def plan_template(ctemplate: ControllerTemplate, assignment: Dict[int, int],
                  directory: DataDirectory) -> Planner:
    """Plan every slot (ids = slot positions) against the entry directory"""
    graph = ctemplate.instantiate(list(range(ctemplate.slot_count)),
                                  [ctemplate.slots[i].params for i in ctemplate.param_slots])
    planner = Planner(directory.copy(), SymbolicIds(ctemplate.slot_count).reserve)
    for task in graph:
        planner.place(task, assignment[task.id])
    return planner


def close_template_loop(planner: Planner) -> List[Task]:
    """
    Append exit copies so the template leaves its own preconditions satisfied

    Returns the copy tasks added; empty when the postconditions already cover
    the preconditions.
    """
    return planner.close_loop()


def build_central(ctemplate: ControllerTemplate, planner: Planner, epoch: int,
                  loop_closed: bool) -> WorkerTemplateCentral:
    T = ctemplate.slot_count
    param_set = set(ctemplate.param_slots)
    key = TemplateKey(ctemplate.block, precondition_signature(planner.preconditions), epoch)

    by_worker: Dict[int, List[Task]] = defaultdict(list)
    for task in planner.graph:
        by_worker[task.assigned_worker].append(task)
    local_index = {}
    for worker, tasks in by_worker.items():
        for i, task in enumerate(tasks):
            local_index[task.id] = i

    pairing = [(t.assigned_worker, t.id - T, t.peer, t.pair - T)
               for t in planner.graph if t.kind is TaskKind.SEND]

    per_worker, compute_slots, param_slots = {}, {}, {}
    for worker in sorted(by_worker):
        slots = []
        compute_slots[worker] = []
        param_slots[worker] = []
        for task in by_worker[worker]:
            is_compute = task.id < T
            compute_index = param_index = None
            if is_compute:
                compute_index = len(compute_slots[worker])
                compute_slots[worker].append(task.id)
                if task.id in param_set:
                    param_index = len(param_slots[worker])
                    param_slots[worker].append(task.id)
            slots.append(LocalSlot(
                kind=task.kind,
                stage=task.stage,
                reads=task.reads,
                writes=task.writes,
                deps=tuple(sorted(local_index[d] for d in task.before)),
                compute_index=compute_index,
                param_index=param_index,
                params=b'' if param_index is not None else task.params,
                copy_offset=None if is_compute else task.id - T,
                pair_offset=None if task.pair is None else task.pair - T,
                peer=task.peer,
                partition=task.partition,
                versions={o: v - planner.entry_versions[o] for o, v in task.versions.items()},
            ))
        mine = [p for p in pairing if worker in (p[0], p[2])]
        per_worker[worker] = LocalTemplate(key, worker, slots, mine)

    return WorkerTemplateCentral(
        key=key,
        slot_count=T,
        per_worker=per_worker,
        compute_slots=compute_slots,
        param_slots=param_slots,
        preconditions=frozenset(planner.preconditions),
        postconditions=planner.postconditions(),
        copy_count=max((t.id - T + 1 for t in planner.graph if t.id >= T), default=0),
        transfers=planner.transfers,
        loop_closed=loop_closed,
    )


def generate_worker_templates(ctemplate: ControllerTemplate, assignment: Dict[int, int],
                              directory: DataDirectory, epoch: int = 0,
                              loop_closure: bool = True) -> Tuple[WorkerTemplateCentral, Dict[int, InstallLocalTemplate]]:
    """
    Partition a controller template over workers for the current entry state

    Returns:
        (central half, install message per participating worker)
    """
    started = time.perf_counter()
    planner = plan_template(ctemplate, assignment, directory)
    if loop_closure:
        close_template_loop(planner)
    central = build_central(ctemplate, planner, epoch, loop_closure)
    central.generation_us = (time.perf_counter() - started) * 1e6
    logger.debug("generated %s: %d workers, %d transfers, %d preconditions",
                 central.key, len(central.workers), central.transfers, len(central.preconditions))
    return central, central.install_messages()


def validate_and_patch(central: WorkerTemplateCentral, directory: DataDirectory,
                       reserve_ids: Callable[[int], int]) -> List[PatchCopy]:
    """
    Copies that establish every unmet precondition

    Raises:
        UnrecoverableObjectError: an object has no holder at all
    """
    patch = []
    for obj, worker in central.unsatisfied(directory):
        holders = directory.holders(obj)
        if not holders:
            raise UnrecoverableObjectError(obj)
        base = reserve_ids(2)
        patch.append(PatchCopy(object=obj, version=directory.version(obj), src=min(holders),
                               dst=worker, copy_ids=[base, base + 1]))
    return patch


def apply_patch(directory: DataDirectory, patch: Sequence[PatchCopy]) -> DataDirectory:
    for copy in patch:
        if directory.version(copy.object) == copy.version:
            directory.add_holder(copy.object, copy.dst)
    return directory


def invoke(central: WorkerTemplateCentral, ctemplate: ControllerTemplate, task_ids: Sequence[int],
           params: Sequence[bytes], copy_base: int, directory: DataDirectory, instance: int,
           readback: Sequence[int] = ()) -> Dict[int, InvokeLocalTemplate]:
    """
    One InvokeLocalTemplate per participating worker

    Readback objects are assigned to the lowest participating worker holding
    them at exit; objects no worker can return are left out.
    """
    if len(task_ids) != ctemplate.slot_count:
        raise InvocationError(f"block {ctemplate.block!r} has {ctemplate.slot_count} slots, got {len(task_ids)} ids")
    if len(params) != len(ctemplate.param_slots):
        raise InvocationError(f"block {ctemplate.block!r} takes {len(ctemplate.param_slots)} params, got {len(params)}")
    slot_params = dict(zip(ctemplate.param_slots, params))
    participating = central.workers

    returns: Dict[int, List[int]] = defaultdict(list)
    for obj in readback:
        holders = [w for w in sorted(central.exit_holders(directory, obj)) if w in participating]
        if holders:
            returns[holders[0]].append(obj)

    messages = {}
    for worker in participating:
        local = central.per_worker[worker]
        messages[worker] = InvokeLocalTemplate(
            key=central.key,
            instance=instance,
            task_ids=[int(task_ids[s]) for s in central.compute_slots[worker]],
            params=[slot_params[s] for s in central.param_slots[worker]],
            copy_base=copy_base,
            base_versions={o: directory.version(o) for o in local.objects()},
            readback=returns.get(worker, []),
        )
    return messages


@dataclass
class Selection:
    kind: str  # fast | hit | patch | generate
    template: Optional[WorkerTemplateCentral] = None
    patch_size: int = 0


class TemplateCache:
    """Controller templates by block, worker template variants by (block, epoch)"""

    def __init__(self, max_variants: int = 4):
        self.max_variants = max_variants
        self.controller: Dict[str, ControllerTemplate] = {}
        self.variants: Dict[Tuple[str, int], List[WorkerTemplateCentral]] = defaultdict(list)
        self.by_key: Dict[TemplateKey, WorkerTemplateCentral] = {}

    def add_controller(self, ctemplate: ControllerTemplate) -> None:
        self.controller[ctemplate.block] = ctemplate

    def controller_template(self, block: str) -> ControllerTemplate:
        try:
            return self.controller[block]
        except KeyError:
            raise UnknownBlockError(f"no template installed for block {block!r}") from None

    def add_variant(self, central: WorkerTemplateCentral) -> None:
        bucket = self.variants[(central.key.block, central.key.epoch)]
        if central.key not in self.by_key:
            bucket.append(central)
        else:
            bucket[bucket.index(self.by_key[central.key])] = central
        self.by_key[central.key] = central

    def get(self, key: TemplateKey) -> WorkerTemplateCentral:
        return self.by_key[key]

    def select(self, block: str, epoch: int, directory: DataDirectory,
               last_key: Optional[TemplateKey], max_patch_copies: int) -> Selection:
        variants = self.variants.get((block, epoch), [])
        if last_key is not None and last_key in self.by_key:
            last = self.by_key[last_key]
            if last.key.block == block and last.key.epoch == epoch and last.loop_closed:
                return Selection('fast', last)
        sizes = []
        for central in variants:
            size = len(central.unsatisfied(directory))
            if size == 0:
                return Selection('hit', central)
            sizes.append((size, central))
        if sizes:
            size, best = min(sizes, key=lambda pair: pair[0])
            if size <= max_patch_copies or len(variants) >= self.max_variants:
                return Selection('patch', best, size)
        return Selection('generate')

    def validate_and_patch(self, key: TemplateKey, directory: DataDirectory,
                           reserve_ids: Callable[[int], int]) -> List[PatchCopy]:
        return validate_and_patch(self.get(key), directory, reserve_ids)

    def stats(self) -> dict:
        return {
            'controller_templates': len(self.controller),
            'worker_templates': len(self.by_key),
            'blocks': sorted(self.controller),
        }


def assignment_for(ctemplate: ControllerTemplate, placement: Placement,
                   directory: DataDirectory) -> Dict[int, int]:
    """Slot -> worker for the current placement and entry directory"""
    graph = ctemplate.instantiate(list(range(ctemplate.slot_count)),
                                  [ctemplate.slots[i].params for i in ctemplate.param_slots])
    return compute_assignment(graph, placement, directory)
