"""
Tests for tasks, task graphs, id spaces and the data directory
"""

import random

import pytest

from modules.errors import (
    CycleError,
    DanglingDependencyError,
    ExclusiveWriteError,
    GraphError,
    TransferError,
    UnknownObjectError,
)
from modules.graph.directory import DataDirectory, apply_writes
from modules.graph.ids import (
    CONTROLLER_ID_BIT,
    CopyIdAllocator,
    TaskIdAllocator,
    TemplateKey,
    is_controller_id,
    precondition_signature,
)
from modules.graph.task import Task, TaskKind
from modules.graph.task_graph import (
    TaskGraph,
    check_exclusive_writes,
    insert_transfer_pair,
    ready_tasks,
    topological_order,
    validate_dag,
)


def compute(task_id, reads=(), writes=(), before=(), worker=None):
    return Task(id=task_id, kind=TaskKind.COMPUTE, stage='Noop', reads=reads, writes=writes,
                before=set(before), assigned_worker=worker)


# -- tasks and ids ---------------------------------------------------------

def test_reads_and_writes_are_deduplicated_in_order():
    task = compute(1, reads=(3, 1, 3), writes=(2, 2))
    assert task.reads == (3, 1)
    assert task.writes == (2,)


def test_task_cannot_depend_on_itself():
    with pytest.raises(GraphError):
        compute(1, before=[1])


def test_copy_tasks_move_exactly_one_object():
    with pytest.raises(GraphError):
        Task(id=1, kind=TaskKind.SEND, stage='send', reads=(1, 2))
    with pytest.raises(GraphError):
        Task(id=2, kind=TaskKind.RECEIVE, stage='receive', writes=(1,), reads=(2,))
    recv = Task(id=3, kind=TaskKind.RECEIVE, stage='receive', writes=(7,))
    assert recv.object == 7


def test_task_dict_round_trip_keeps_params_and_versions():
    task = compute(5, reads=(1,), writes=(2,), before=[4])
    task.params = b'\x00\xffdata'
    task.versions = {1: 3, 2: 4}
    task.partition = 2
    assert Task.from_dict(task.to_dict()) == task


def test_read_version_of_a_read_write_object_is_one_below_its_write():
    task = compute(1, reads=(1, 2), writes=(2,))
    task.versions = {1: 5, 2: 8}
    assert task.read_version(1) == 5
    assert task.read_version(2) == 7
    assert task.read_version(9) is None


def test_driver_and_controller_id_spaces_never_overlap():
    driver = TaskIdAllocator()
    copies = CopyIdAllocator()
    driver_ids = driver.take(100)
    base = copies.reserve(50)
    copy_ids = list(range(base, base + 50)) + [copies.next()]
    assert driver_ids == list(range(1, 101))
    assert driver.last == 100
    assert not any(is_controller_id(t) for t in driver_ids)
    assert all(is_controller_id(t) and t > CONTROLLER_ID_BIT for t in copy_ids)
    assert len(set(copy_ids)) == 51


def test_precondition_signature_ignores_order():
    assert precondition_signature([(1, 0), (2, 1)]) == precondition_signature([(2, 1), (1, 0)])
    assert precondition_signature([(1, 0)]) != precondition_signature([(1, 1)])


def test_template_key_list_round_trip():
    key = TemplateKey('lr.optimize', 'abc', 3)
    assert TemplateKey.from_list(key.to_list()) == key
    assert str(key) == 'lr.optimize@3#abc'


# -- graphs ----------------------------------------------------------------

def test_validate_dag_rejects_dangling_dependency():
    graph = TaskGraph([compute(1), compute(2, before=[9])])
    with pytest.raises(DanglingDependencyError) as info:
        validate_dag(graph)
    assert (info.value.task_id, info.value.missing) == (2, 9)


def test_external_dependencies_are_allowed_and_count_as_done():
    graph = TaskGraph([compute(10, before=[3])], external=[3])
    assert validate_dag(graph)
    assert ready_tasks(graph, set(), set()) == {10}


def test_cycle_error_carries_a_witness():
    graph = TaskGraph([compute(1, before=[3]), compute(2, before=[1]), compute(3, before=[2]), compute(4)])
    with pytest.raises(CycleError) as info:
        validate_dag(graph)
    cycle = info.value.cycle
    assert set(cycle) == {1, 2, 3}
    for a, b in zip(cycle, cycle[1:] + cycle[:1]):
        # each node of the witness is a dependency of the next one round the loop
        assert a in graph.get(b).before or b in graph.get(a).before


def test_duplicate_ids_are_rejected():
    with pytest.raises(GraphError):
        TaskGraph([compute(1), compute(1)])


def test_topological_order_respects_edges_and_program_order():
    graph = TaskGraph([compute(1), compute(2, before=[3]), compute(3), compute(4, before=[2, 1])])
    assert topological_order(graph) == [1, 3, 2, 4]


def test_random_dags_sort_consistently():
    rng = random.Random(7)
    for _ in range(50):
        n = rng.randint(1, 30)
        tasks = [compute(i, before=rng.sample(range(1, i), rng.randint(0, min(3, i - 1))) if i > 1 else [])
                 for i in range(1, n + 1)]
        order = topological_order(TaskGraph(tasks))
        position = {t: i for i, t in enumerate(order)}
        assert sorted(order) == list(range(1, n + 1))
        for task in tasks:
            assert all(position[d] < position[task.id] for d in task.before)


def test_draining_ready_tasks_yields_a_valid_order():
    rng = random.Random(19)
    for _ in range(100):
        n = rng.randint(1, 25)
        ids = rng.sample(range(1, 1000), n)
        tasks = []
        for i, task_id in enumerate(ids):
            before = rng.sample(ids[:i], rng.randint(0, min(3, i)))
            if rng.random() < 0.2:
                tasks.append(Task(id=task_id, kind=TaskKind.RECEIVE, stage='receive', writes=(task_id,),
                                  before=set(before)))
            else:
                tasks.append(compute(task_id, before=before))
        rng.shuffle(tasks)
        graph = TaskGraph(tasks)

        completed, arrived, order = set(), set(), []
        while len(order) < n:
            arrived |= {t.id for t in tasks if t.kind is TaskKind.RECEIVE and rng.random() < 0.5}
            ready = ready_tasks(graph, completed, arrived)
            for task_id in ready:
                task = graph.get(task_id)
                assert task.before <= completed
                assert task.kind is not TaskKind.RECEIVE or task_id in arrived
            if not ready:
                continue
            for task_id in rng.sample(sorted(ready), rng.randint(1, len(ready))):
                completed.add(task_id)
                order.append(task_id)

        position = {t: i for i, t in enumerate(order)}
        assert sorted(order) == sorted(ids)
        for task in tasks:
            assert all(position[d] < position[task.id] for d in task.before)


def test_exclusive_writes_detects_unordered_writers_on_one_worker():
    graph = TaskGraph([compute(1, writes=(5,), worker=0), compute(2, writes=(5,), worker=0)])
    with pytest.raises(ExclusiveWriteError):
        check_exclusive_writes(graph)

    ordered = TaskGraph([compute(1, writes=(5,), worker=0), compute(2, writes=(5,), before=[1], worker=0)])
    check_exclusive_writes(ordered)

    different_copies = TaskGraph([compute(1, writes=(5,), worker=0), compute(2, writes=(5,), worker=1)])
    check_exclusive_writes(different_copies)


def test_ready_tasks_waits_for_receive_payload():
    recv = Task(id=CONTROLLER_ID_BIT + 2, kind=TaskKind.RECEIVE, stage='receive', writes=(1,))
    graph = TaskGraph([recv, compute(2, reads=(1,), before=[recv.id])])
    assert ready_tasks(graph, set(), set()) == set()
    assert ready_tasks(graph, set(), {recv.id}) == {recv.id}
    assert ready_tasks(graph, {recv.id}, {recv.id}) == {2}


def test_insert_transfer_pair_wires_send_and_receive():
    graph = TaskGraph([compute(1, writes=(7,), worker=0), compute(2, reads=(7,), worker=1)])
    graph.get(1).versions = {7: 4}
    send, recv = insert_transfer_pair(graph, 1, 0, 2, 1, 7, CopyIdAllocator())
    assert send.kind is TaskKind.SEND and recv.kind is TaskKind.RECEIVE
    assert (send.pair, recv.pair) == (recv.id, send.id)
    assert (send.peer, recv.peer) == (1, 0)
    assert send.before == {1}
    assert recv.id in graph.get(2).before
    assert send.versions == recv.versions == {7: 4}
    validate_dag(graph)


def test_insert_transfer_pair_rejects_invalid_edges():
    graph = TaskGraph([compute(1, writes=(7,), worker=0), compute(2, reads=(8,), worker=1)])
    with pytest.raises(TransferError):
        insert_transfer_pair(graph, 1, 0, 2, 0, 7, CopyIdAllocator())
    with pytest.raises(TransferError):
        insert_transfer_pair(graph, 1, 0, 2, 1, 7, CopyIdAllocator())
    with pytest.raises(TransferError):
        insert_transfer_pair(graph, 1, 0, 2, 1, 8, CopyIdAllocator())


# -- directory -------------------------------------------------------------

def test_directory_tracks_latest_version_and_holders():
    directory = DataDirectory()
    directory.register(1, [0], partition=0, name='x[0]')
    write = compute(10, writes=(1,))
    apply_writes(directory, write, 1)
    assert directory.version(1) == 1
    assert directory.holders(1) == {1}

    recv = Task(id=CONTROLLER_ID_BIT + 1, kind=TaskKind.RECEIVE, stage='receive', writes=(1,), versions={1: 1})
    apply_writes(directory, recv, 0)
    assert directory.holders(1) == {0, 1}


def test_stale_completion_does_not_roll_back():
    directory = DataDirectory()
    directory.register(1, [0], version=5)
    old = compute(1, writes=(1,))
    old.versions = {1: 3}
    apply_writes(directory, old, 1)
    assert directory.version(1) == 5
    assert directory.holders(1) == {0}


def test_unknown_object_and_orphans():
    directory = DataDirectory()
    directory.register(1, [0])
    directory.register(2, [0, 1])
    with pytest.raises(UnknownObjectError):
        directory.version(3)
    assert directory.drop_worker(0) == [1]
    assert directory.holders(2) == {1}


def test_directory_copy_is_independent():
    directory = DataDirectory()
    directory.register(1, [0])
    clone = directory.copy()
    clone.add_holder(1, 3)
    assert directory.holders(1) == {0}
    assert clone.snapshot() != directory.snapshot()
