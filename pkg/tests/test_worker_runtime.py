"""
Tests for the worker runtime, its object store, stage registry and local templates
"""

import pytest

from modules.controller.checkpoint import snapshot_name
from modules.errors import (
    ExclusiveWriteError,
    InstallError,
    InvocationError,
    KernelError,
    TransferError,
    VersionMismatchError,
)
from modules.graph.ids import TemplateKey
from modules.graph.task import Task, TaskKind
from modules.protocol.messages import (
    Ack,
    DataMessage,
    ExecuteTask,
    FetchObjects,
    InstallAck,
    InstallLocalTemplate,
    InvokeLocalTemplate,
    ObjectValues,
    PatchCopy,
    PullObject,
    RestoreCmd,
    TaskDone,
    TemplateDone,
    WorkerFault,
)
from modules.utils.config import WorkerConfig
from modules.worker.local_template import LocalSlot, LocalTemplate
from modules.worker.object_store import ObjectStore
from modules.worker.registry import builtin_registry, spin_params
from modules.worker.runtime import WorkerRuntime

KEY = TemplateKey('block', 'sig', 0)


class FakeTransport:
    def __init__(self):
        self.controller = []
        self.peers = []

    def to_controller(self, message):
        self.controller.append(message)

    def to_peer(self, worker_id, message):
        self.peers.append((worker_id, message))


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now


def make_runtime(worker_id=0, clock=None, **config):
    transport = FakeTransport()
    runtime = WorkerRuntime(worker_id, builtin_registry(), transport, config=WorkerConfig(**config),
                            clock=clock or FakeClock())
    return runtime, transport


def const_task(task_id, obj, value, version, before=()):
    return Task(id=task_id, kind=TaskKind.COMPUTE, stage='Const', writes=(obj,), params=value,
                versions={obj: version}, before=set(before))


def faults(transport):
    return [m for m in transport.controller if isinstance(m, WorkerFault)]


# -- explicit tasks ----------------------------------------------------------

def test_explicit_task_runs_and_reports():
    runtime, transport = make_runtime()
    runtime.handle_control(ExecuteTask(task=const_task(1, 5, b'hi', 1)))
    assert runtime.store.get(5).version == 1
    assert runtime.store.payload(5) == b'hi'
    assert transport.controller == [TaskDone(1)]
    assert not runtime.pending


def test_dependencies_order_execution():
    runtime, transport = make_runtime()
    second = Task(id=2, kind=TaskKind.COMPUTE, stage='Tag', reads=(5,), writes=(6,),
                  versions={5: 1, 6: 1}, before={1})
    runtime.add_tasks([second, const_task(1, 5, b'x', 1)], ('explicit', 0))
    assert transport.controller == [TaskDone(1), TaskDone(2)]
    assert runtime.store.get(6).version == 1


def test_stale_read_faults_the_worker():
    runtime, transport = make_runtime()
    runtime.handle_control(ExecuteTask(task=Task(id=3, kind=TaskKind.COMPUTE, stage='Noop', reads=(5,),
                                                 versions={5: 2})))
    [fault] = faults(transport)
    assert fault.error == 'VersionMismatchError'
    assert fault.task_id == 3
    assert runtime.faulted


def test_kernel_errors_fault_the_task():
    runtime, transport = make_runtime()
    runtime.handle_control(ExecuteTask(task=Task(id=4, kind=TaskKind.COMPUTE, stage='Missing', writes=(1,))))
    [fault] = faults(transport)
    assert fault.error == 'KernelError'


def test_send_and_receive_move_one_version():
    sender, sender_out = make_runtime(0)
    receiver, receiver_out = make_runtime(1)
    sender.store.put(7, 2, b'payload')

    receiver.handle_control(ExecuteTask(task=Task(id=11, kind=TaskKind.RECEIVE, stage='', writes=(7,),
                                                  versions={7: 2}, peer=0, pair=10)))
    assert receiver_out.controller == []
    sender.handle_control(ExecuteTask(task=Task(id=10, kind=TaskKind.SEND, stage='', reads=(7,),
                                                versions={7: 2}, peer=1, pair=11)))
    [(target, message)] = sender_out.peers
    assert target == 1 and message == DataMessage(7, 2, 11, b'payload')

    receiver.handle_peer(message)
    assert receiver.store.get(7).version == 2
    assert receiver.store.payload(7) == b'payload'
    assert receiver_out.controller == [TaskDone(11)]
    assert sender_out.controller == [TaskDone(10)]


def test_run_send_and_run_receive_directly():
    sender, sender_out = make_runtime(0)
    sender.store.put(7, 2, b'payload')
    sender.run_send(Task(id=10, kind=TaskKind.SEND, stage='', reads=(7,), versions={7: 2}, peer=1, pair=11))
    assert sender_out.peers == [(1, DataMessage(7, 2, 11, b'payload'))]
    assert sender_out.controller == [TaskDone(10)]

    receiver, receiver_out = make_runtime(1)
    recv = Task(id=11, kind=TaskKind.RECEIVE, stage='', writes=(7,), versions={7: 3}, peer=0, pair=10)
    with pytest.raises(TransferError):
        receiver.run_receive(recv)
    receiver.arrivals[11] = DataMessage(7, 2, 11, b'payload')
    with pytest.raises(VersionMismatchError):
        receiver.run_receive(recv)
    receiver.arrivals[11] = DataMessage(7, 3, 11, b'newer')
    receiver.run_receive(recv)
    assert receiver.store.get(7).version == 3
    assert receiver_out.controller == [TaskDone(11)]


def test_dispatch_step_waits_while_faulted():
    runtime, transport = make_runtime()
    runtime.faulted = True
    runtime.add_tasks([const_task(1, 5, b'hi', 1)], ('explicit', 0))
    assert transport.controller == [] and 1 in runtime.pending
    runtime.faulted = False
    runtime.dispatch_step()
    assert transport.controller == [TaskDone(1)]
    assert runtime.store.payload(5) == b'hi'


def test_data_arriving_before_its_receive_is_buffered():
    runtime, transport = make_runtime()
    runtime.handle_peer(DataMessage(7, 1, 11, b'early'))
    runtime.handle_control(ExecuteTask(task=Task(id=11, kind=TaskKind.RECEIVE, stage='', writes=(7,),
                                                 versions={7: 1}, peer=1, pair=10)))
    assert runtime.store.payload(7) == b'early'
    assert transport.controller == [TaskDone(11)]


def test_starved_receive_times_out():
    clock = FakeClock()
    runtime, transport = make_runtime(clock=clock, recv_timeout_s=5.0)
    runtime.handle_control(ExecuteTask(task=Task(id=11, kind=TaskKind.RECEIVE, stage='', writes=(7,),
                                                 peer=1, pair=10)))
    runtime.tick()
    assert faults(transport) == []
    clock.now = 6.0
    runtime.tick()
    [fault] = faults(transport)
    assert fault.error == 'TransferError' and fault.task_id == 11


def test_halt_drops_pending_work():
    runtime, _ = make_runtime()
    runtime.handle_control(ExecuteTask(task=Task(id=11, kind=TaskKind.RECEIVE, stage='', writes=(7,),
                                                 peer=1, pair=10)))
    runtime.halt()
    assert not runtime.pending and not runtime.starved_since


def test_halt_discards_buffered_arrivals():
    runtime, _ = make_runtime()
    runtime.handle_peer(DataMessage(7, 1, 11, b'early'))
    assert 11 in runtime.arrivals
    runtime.halt()
    assert runtime.arrivals == {}


# -- templates ---------------------------------------------------------------

def const_template(worker=0, stage='Const'):
    slot = LocalSlot(TaskKind.COMPUTE, stage, writes=(5,), compute_index=0, param_index=0, versions={5: 1})
    return LocalTemplate(KEY, worker, [slot])


def test_install_then_invoke():
    runtime, transport = make_runtime()
    runtime.handle_control(InstallLocalTemplate(KEY, const_template().to_dict()))
    [ack] = transport.controller
    assert isinstance(ack, InstallAck) and ack.ok and ack.key == KEY

    transport.controller.clear()
    runtime.handle_control(InvokeLocalTemplate(KEY, instance=1, task_ids=[40], params=[b'v'], copy_base=0,
                                               base_versions={5: 3}, readback=[5]))
    assert transport.controller == [TemplateDone(KEY, 1, {5: b'v'})]
    assert runtime.store.get(5).version == 4


def test_public_install_and_invoke_entry_points():
    runtime, transport = make_runtime()
    runtime.install_local_template(InstallLocalTemplate(KEY, const_template().to_dict()))
    assert KEY in runtime.templates
    transport.controller.clear()
    runtime.invoke_local_template(InvokeLocalTemplate(KEY, instance=2, task_ids=[41], params=[b'w'],
                                                      copy_base=0, base_versions={5: 0}, readback=[5]))
    assert transport.controller == [TemplateDone(KEY, 2, {5: b'w'})]
    assert runtime.instances == {}


@pytest.mark.parametrize('template', [const_template(stage='Unknown'), const_template(worker=3)])
def test_bad_templates_are_rejected(template):
    runtime, transport = make_runtime()
    runtime.handle_control(InstallLocalTemplate(KEY, template.to_dict()))
    [ack] = transport.controller
    assert not ack.ok and ack.reason
    assert KEY not in runtime.templates


def test_invoking_an_unknown_template_faults():
    runtime, transport = make_runtime()
    runtime.handle_control(InvokeLocalTemplate(KEY, instance=1, task_ids=[40], params=[b'v']))
    [fault] = faults(transport)
    assert fault.error == 'TemplateError'


def test_local_template_validation():
    known = ['Const']
    with pytest.raises(InstallError):
        const_template(stage='Nope').validate(known)

    template = const_template()
    template.slots[0].deps = (4,)
    with pytest.raises(InstallError):
        template.validate(known)

    a = LocalSlot(TaskKind.COMPUTE, 'Const', deps=(1,), compute_index=0)
    b = LocalSlot(TaskKind.COMPUTE, 'Const', deps=(0,), compute_index=1)
    with pytest.raises(InstallError):
        LocalTemplate(KEY, 0, [a, b]).validate(known)

    recv = LocalSlot(TaskKind.RECEIVE, '', writes=(5,), copy_offset=1, pair_offset=0, peer=1)
    with pytest.raises(InstallError):
        LocalTemplate(KEY, 0, [recv]).validate(known)
    LocalTemplate(KEY, 0, [recv], [(1, 0, 0, 1)]).validate(known)


def test_local_instantiation_checks_counts():
    template = const_template()
    with pytest.raises(InvocationError):
        template.instantiate([1, 2], [b'v'], 0, {5: 0})
    with pytest.raises(InvocationError):
        template.instantiate([1], [], 0, {5: 0})
    with pytest.raises(InvocationError):
        template.instantiate([1], [b'v'], 0, {})
    [task] = template.instantiate([9], [b'v'], 0, {5: 2})
    assert (task.id, task.params, task.versions, task.assigned_worker) == (9, b'v', {5: 3}, 0)


# -- patches, fetch and restore ----------------------------------------------

def test_patch_copy_pulls_from_the_source():
    holder, holder_out = make_runtime(1)
    puller, puller_out = make_runtime(0)
    holder.store.put(7, 2, b'state')

    puller.handle_control(PatchCopy(object=7, version=2, src=1, dst=0, copy_ids=[20, 21]))
    [(target, pull)] = puller_out.peers
    assert target == 1 and pull == PullObject(7, 2, 21, 0)

    holder.handle_peer(pull)
    [(back, data)] = holder_out.peers
    assert back == 0
    puller.handle_peer(data)
    assert puller.store.get(7).version == 2
    assert puller_out.controller == [TaskDone(21)]


def test_pull_of_a_stale_version_faults():
    holder, transport = make_runtime(1)
    holder.store.put(7, 1, b'old')
    holder.handle_peer(PullObject(7, 2, 21, 0))
    [fault] = faults(transport)
    assert fault.error == 'VersionMismatchError'


def test_fetch_returns_payloads():
    runtime, transport = make_runtime()
    runtime.store.put(5, 1, b'abc')
    runtime.handle_control(FetchObjects(ids=[5, 6], request=3))
    assert transport.controller == [ObjectValues({5: b'abc', 6: b''}, 3)]


def test_restore_reloads_snapshots(tmp_path):
    (tmp_path / snapshot_name(5, 3)).write_bytes(b'saved')
    runtime, transport = make_runtime()
    runtime.store.put(9, 1, b'gone')
    runtime.handle_control(RestoreCmd(checkpoint_id='ck', directory=str(tmp_path), objects=[[5, 3]],
                                      generation=2))
    assert runtime.store.get(5).version == 3 and runtime.store.payload(5) == b'saved'
    assert 9 not in runtime.store
    assert transport.controller == [Ack('RestoreCmd', 'ck', 2)]


def test_restore_with_a_missing_snapshot_faults_instead_of_acking(tmp_path):
    (tmp_path / snapshot_name(5, 3)).write_bytes(b'saved')
    runtime, transport = make_runtime()
    runtime.handle_control(RestoreCmd(checkpoint_id='ck', directory=str(tmp_path), objects=[[5, 3], [6, 1]],
                                      generation=2))
    [fault] = faults(transport)
    assert fault.error == 'CheckpointIntegrityError' and 'object 6 v1' in fault.reason
    assert not any(isinstance(m, Ack) for m in transport.controller)


# -- store, registry, stats --------------------------------------------------

def test_exclusive_write_guard():
    store = ObjectStore(debug_guards=True)
    store.acquire(1, reads=[1], writes=[2])
    with pytest.raises(ExclusiveWriteError):
        store.acquire(2, reads=[2], writes=[])
    with pytest.raises(ExclusiveWriteError):
        store.acquire(3, reads=[], writes=[1])
    store.release(1, reads=[1], writes=[2])
    store.acquire(2, reads=[2], writes=[1])

    unguarded = ObjectStore()
    unguarded.acquire(1, [1], [2])
    unguarded.acquire(2, [2], [1])


def test_builtin_kernels():
    registry = builtin_registry()
    assert registry.run('Const', [], b'z', 2) == [b'z', b'z']
    assert registry.run('Noop', [b'a'], b'', 1) == [b'']

    first = registry.run('Spin', [], spin_params(0.0), 1)[0]
    second = registry.run('Spin', [first], spin_params(1.0), 1)[0]
    assert int.from_bytes(second, 'little') == 2

    tagged = registry.run('Tag', [b'a', b'b'], b'p', 2)
    assert tagged == registry.run('Tag', [b'a', b'b'], b'p', 2)
    assert tagged[0] != tagged[1]
    assert tagged != registry.run('Tag', [b'ab', b''], b'p', 2)

    with pytest.raises(KernelError):
        registry.run('Missing', [], b'', 0)
    registry.register('Broken', lambda inputs, params, n: [])
    with pytest.raises(KernelError):
        registry.run('Broken', [], b'', 1)
    with pytest.raises(KernelError):
        registry.run('Spin', [], spin_params(-1.0), 1)


def test_heartbeat_windows():
    clock = FakeClock()
    runtime, _ = make_runtime(clock=clock)
    clock.now = 2.0
    runtime.handle_control(ExecuteTask(task=Task(id=11, kind=TaskKind.RECEIVE, stage='', writes=(7,),
                                                 peer=1, pair=10)))
    clock.now = 5.0
    beat = runtime.stats.heartbeat()
    assert beat.window_ms == pytest.approx(5000.0)
    assert beat.idle_ms == pytest.approx(2000.0)
    assert beat.blocked_ms == pytest.approx(3000.0)
    assert runtime.stats.heartbeat().window_ms == 0.0
