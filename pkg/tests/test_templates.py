"""
Tests for assignment, physical planning, controller/worker templates and
validate-and-patch
"""

import random

import pytest

from modules.controller.assignment import EpochRegistry, Placement, assign_task, compute_assignment
from modules.controller.planner import Planner
from modules.controller.templates import (
    TemplateCache,
    TemplateRecorder,
    apply_patch,
    assignment_for,
    generate_worker_templates,
    invoke,
    validate_and_patch,
)
from modules.errors import InvocationError, RebalanceError, UnknownBlockError
from modules.graph.directory import DataDirectory
from modules.graph.ids import CopyIdAllocator
from modules.graph.task import Task, TaskKind
from modules.graph.task_graph import check_exclusive_writes, validate_dag
from modules.worker.local_template import LocalTemplate

# objects of the two-partition test block
X0, X1, C, G0, G1 = 1, 2, 3, 4, 5


def compute(task_id, stage, reads=(), writes=(), partition=None, params=b'', before=()):
    return Task(id=task_id, kind=TaskKind.COMPUTE, stage=stage, reads=reads, writes=writes,
                partition=partition, params=params, before=set(before))


def entry_directory():
    directory = DataDirectory()
    directory.register(X0, [0], partition=0)
    directory.register(X1, [1], partition=1)
    directory.register(C, [0])
    directory.register(G0, [0], partition=0)
    directory.register(G1, [1], partition=1)
    return directory


def step_tasks(first_id=1):
    return [
        compute(first_id, 'Gradient', (X0, C), (G0,), partition=0),
        compute(first_id + 1, 'Gradient', (X1, C), (G1,), partition=1),
        compute(first_id + 2, 'Reduce', (C, G0, G1), (C,), params=b'rate'),
    ]


def record(block, tasks):
    recorder = TemplateRecorder(block)
    for task in tasks:
        recorder.record_block_task(task)
    return recorder.finalize()


def generated(loop_closure=True, epoch=0):
    ctemplate = record('step', step_tasks())
    directory = entry_directory()
    assignment = assignment_for(ctemplate, Placement((0, 1)), directory)
    central, installs = generate_worker_templates(ctemplate, assignment, directory, epoch, loop_closure)
    return ctemplate, central, installs


# -- assignment --------------------------------------------------------------

def test_partitioned_tasks_follow_their_data_and_others_the_majority():
    directory = entry_directory()
    placement = Placement((0, 1))
    tasks = step_tasks()
    assert compute_assignment(tasks, placement, directory) == {1: 0, 2: 1, 3: 0}
    assert assign_task(compute(9, 'Noop'), placement, directory) == 0


def test_partition_locality_outweighs_a_majority_of_shared_reads():
    directory = DataDirectory()
    for shared in (1, 2, 3):
        directory.register(shared, [0])
    directory.register(4, [1], partition=1)
    placement = Placement((0, 1))
    task = compute(1, 'Gradient', reads=(1, 2, 3, 4), writes=(4,), partition=1)
    assert assign_task(task, placement, directory) == 1
    unpartitioned = compute(2, 'Reduce', reads=(1, 2, 3, 4))
    assert assign_task(unpartitioned, placement, directory) == 0


def test_assignment_ties_go_to_the_lowest_worker():
    directory = DataDirectory()
    directory.register(1, [2])
    directory.register(2, [1])
    assert assign_task(compute(1, 'Noop', reads=(1, 2)), Placement((1, 2)), directory) == 1


def test_inactive_holders_are_ignored():
    directory = DataDirectory()
    directory.register(1, [3], partition=5)
    placement = Placement((0, 1))
    assert assign_task(compute(1, 'Noop', reads=(1,), partition=5), placement, directory) == placement.home(5) == 1


def test_placement_home_overrides_and_epochs():
    placement = Placement((2, 0, 1))
    assert placement.workers == (0, 1, 2)
    assert [placement.home(p) for p in range(4)] == [0, 1, 2, 0]
    moved = placement.with_override(1, 2)
    assert moved.home(1) == 2 and moved.home(4) == 1

    epochs = EpochRegistry()
    first = epochs.epoch_for(placement)
    half = epochs.epoch_for(Placement((0, 1)))
    assert epochs.epoch_for(Placement((0, 1, 2))) == first
    assert half != first

    with pytest.raises(RebalanceError):
        Placement(())


# -- controller templates ----------------------------------------------------

def test_recorder_keeps_shape_and_takes_params_for_every_compute_slot():
    tasks = step_tasks(10)
    tasks[2].before = {10, 11, 4}
    ctemplate = record('step', tasks)
    assert ctemplate.slot_count == 3
    assert ctemplate.param_slots == [0, 1, 2]
    assert ctemplate.slots[2].dep_indices == (0, 1)
    assert ctemplate.slots[2].external_deps == (4,)


def test_instantiate_maps_slots_to_fresh_ids():
    ctemplate = record('step', [compute(1, 'A', writes=(1,)), compute(2, 'B', reads=(1,), before=[1], params=b'x')])
    graph = ctemplate.instantiate([20, 21], [b'', b'y'])
    assert graph.get(21).before == {20}
    assert graph.get(21).params == b'y'
    with pytest.raises(InvocationError):
        ctemplate.instantiate([20], [b'', b'y'])
    with pytest.raises(InvocationError):
        ctemplate.instantiate([20, 21], [b'y'])
    with pytest.raises(InvocationError):
        ctemplate.instantiate([20, 20], [b'', b'y'])


def test_worker_templates_split_the_block_and_record_conditions():
    ctemplate, central, installs = generated()
    assert central.workers == [0, 1]
    assert sorted(installs) == [0, 1]
    assert central.preconditions == {(X0, 0), (C, 0), (X1, 1)}
    assert central.transfers == 2
    assert central.copy_count == 4
    assert central.compute_slots == {0: [0, 2], 1: [1]}
    assert central.param_slots == {0: [0, 2], 1: [1]}
    assert central.loop_closed


def test_local_templates_validate_and_install_from_the_wire_form():
    _, central, installs = generated()
    for worker, message in installs.items():
        local = LocalTemplate.from_dict(message.key, message.template)
        local.validate(['Gradient', 'Reduce'])
        assert local == central.per_worker[worker]


def test_postconditions_move_the_directory_like_an_explicit_run():
    ctemplate, central, _ = generated(loop_closure=False)
    entry = entry_directory()

    planner = Planner(entry.copy(), CopyIdAllocator().reserve)
    graph = ctemplate.instantiate([1, 2, 3], [b'', b'', b'rate'])
    for task in graph:
        planner.place(task, assign_task(task, Placement((0, 1)), entry))

    after = entry.copy()
    central.apply_postconditions(after)
    assert after.snapshot() == planner.directory.snapshot()
    assert after.version(C) == 1 and after.holders(C) == {0}
    assert after.holders(G1) == {0, 1}


def test_invoke_builds_one_message_per_worker():
    ctemplate, central, _ = generated()
    directory = entry_directory()
    messages = invoke(central, ctemplate, [11, 12, 13], [b'', b'', b'q'], 1000, directory, instance=7, readback=[C])
    assert sorted(messages) == [0, 1]
    assert messages[0].task_ids == [11, 13] and messages[0].params == [b'', b'q']
    assert messages[1].task_ids == [12] and messages[1].params == [b'']
    assert messages[0].readback == [C] and messages[1].readback == []
    assert messages[0].base_versions == {X0: 0, C: 0, G0: 0, G1: 0}

    with pytest.raises(InvocationError):
        invoke(central, ctemplate, [11, 12], [b'', b'', b'q'], 1000, directory, instance=8)


def test_local_instantiation_resolves_ids_pairs_and_versions():
    ctemplate, central, _ = generated()
    directory = entry_directory()
    directory.set_latest(C, 4, {0})
    messages = invoke(central, ctemplate, [11, 12, 13], [b'', b'', b'q'], 1000, directory, instance=1)
    tasks = {}
    for worker, message in messages.items():
        local = central.per_worker[worker]
        for task in local.instantiate(message.task_ids, message.params, message.copy_base, message.base_versions):
            tasks[task.id] = task

    reduce_task = tasks[13]
    assert reduce_task.params == b'q'
    assert reduce_task.versions[C] == 5
    assert reduce_task.read_version(C) == 4
    sends = [t for t in tasks.values() if t.kind is TaskKind.SEND]
    for send in sends:
        recv = tasks[send.pair]
        assert recv.kind is TaskKind.RECEIVE and recv.pair == send.id
        assert recv.assigned_worker == send.peer
    assert all(1000 <= t.id < 1000 + central.copy_count for t in tasks.values() if t.kind is not TaskKind.COMPUTE)


# -- selection and patching --------------------------------------------------

def test_cache_selection_order():
    _, central, _ = generated()
    cache = TemplateCache(max_variants=2)
    with pytest.raises(UnknownBlockError):
        cache.controller_template('step')
    cache.add_variant(central)
    entry = entry_directory()

    assert cache.select('step', 0, entry, None, 256).kind == 'hit'
    assert cache.select('step', 0, entry, central.key, 256).kind == 'fast'
    assert cache.select('step', 1, entry, None, 256).kind == 'generate'

    moved = entry.copy()
    moved.set_latest(C, 0, {1})
    selection = cache.select('step', 0, moved, None, 256)
    assert (selection.kind, selection.patch_size) == ('patch', 1)
    assert cache.select('step', 0, moved, None, 0).kind == 'generate'

    full = TemplateCache(max_variants=1)
    full.add_variant(central)
    assert full.select('step', 0, moved, None, 0).kind == 'patch'


def test_patch_pulls_missing_copies_from_a_holder():
    _, central, _ = generated()
    moved = entry_directory()
    moved.set_latest(C, 2, {1})
    patch = validate_and_patch(central, moved, CopyIdAllocator().reserve)
    assert [(p.object, p.version, p.src, p.dst) for p in patch] == [(C, 2, 1, 0)]
    apply_patch(moved, patch)
    assert central.unsatisfied(moved) == []


# -- randomized properties ---------------------------------------------------

def random_block(rng, objects):
    count = rng.randint(1, 12)
    tasks = []
    for i in range(1, count + 1):
        reads = rng.sample(objects, rng.randint(0, min(3, len(objects))))
        writes = rng.sample(objects, rng.randint(0, min(2, len(objects))))
        before = rng.sample(range(1, i), rng.randint(0, min(2, i - 1))) if i > 1 else []
        tasks.append(compute(i, 'Noop', reads, writes, partition=rng.choice([None, 0, 1, 2, 3]),
                             params=rng.choice([b'', b'p']), before=before))
    return tasks


def random_directory(rng, objects, workers):
    directory = DataDirectory()
    for obj in objects:
        holders = rng.sample(workers, rng.randint(1, len(workers)))
        directory.register(obj, holders, version=rng.randint(0, 3), partition=rng.choice([None, 0, 1, 2, 3]))
    return directory


def test_random_blocks_plan_consistently():
    rng = random.Random(2024)
    for _ in range(200):
        workers = list(range(rng.randint(1, 4)))
        objects = list(range(1, rng.randint(2, 8)))
        entry = random_directory(rng, objects, workers)
        placement = Placement(tuple(workers))
        tasks = random_block(rng, objects)
        ctemplate = record('b', tasks)

        planner = Planner(entry.copy(), CopyIdAllocator().reserve)
        for task in ctemplate.instantiate([t.id for t in tasks], [t.params for t in tasks]):
            planner.place(task, assign_task(task, placement, entry))
        validate_dag(planner.graph)
        check_exclusive_writes(planner.graph)
        for task in planner.graph:
            for dep in task.before:
                assert planner.graph.get(dep).assigned_worker == task.assigned_worker

        central, installs = generate_worker_templates(
            ctemplate, assignment_for(ctemplate, placement, entry), entry, 0, loop_closure=False)
        after = entry.copy()
        central.apply_postconditions(after)
        assert after.snapshot() == planner.directory.snapshot()
        for worker, message in installs.items():
            LocalTemplate.from_dict(message.key, message.template).validate(['Noop'])


def test_patches_always_establish_preconditions():
    rng = random.Random(99)
    workers = [0, 1, 2, 3]
    objects = list(range(1, 7))
    base = random_directory(rng, objects, workers)
    templates = []
    for _ in range(10):
        ctemplate = record('b', random_block(rng, objects))
        central, _ = generate_worker_templates(
            ctemplate, assignment_for(ctemplate, Placement(tuple(workers)), base), base, 0, True)
        templates.append(central)

    for _ in range(500):
        state = random_directory(rng, objects, workers)
        central = rng.choice(templates)
        patch = validate_and_patch(central, state, CopyIdAllocator().reserve)
        for copy in patch:
            assert copy.src in state.holders(copy.object)
            assert copy.version == state.version(copy.object)
        apply_patch(state, patch)
        assert central.unsatisfied(state) == []


def test_closed_templates_satisfy_their_own_preconditions_at_exit():
    rng = random.Random(5)
    for _ in range(200):
        workers = list(range(rng.randint(1, 4)))
        objects = list(range(1, rng.randint(2, 8)))
        entry = random_directory(rng, objects, workers)
        ctemplate = record('b', random_block(rng, objects))
        central, _ = generate_worker_templates(
            ctemplate, assignment_for(ctemplate, Placement(tuple(workers)), entry), entry, 0, True)
        after = entry.copy()
        central.apply_postconditions(after)
        assert central.unsatisfied(after) == []
