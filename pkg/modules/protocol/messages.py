"""
Message catalog

Control messages are dataclasses registered under their wire `type` name.
`WIRE` names the fields that need a non-JSON-native encoding; every other
field is carried as-is.
"""

from dataclasses import dataclass, field, fields
from typing import ClassVar, Dict, List, Optional, Type

from ..graph.ids import TemplateKey
from ..graph.task import Task

CONTROL_TYPES: Dict[str, Type['ControlMessage']] = {}


def control(cls):
    """Register a control message class under its TYPE"""
    CONTROL_TYPES[cls.TYPE] = cls
    return cls


@dataclass
class ControlMessage:
    TYPE: ClassVar[str] = ''
    WIRE: ClassVar[Dict[str, str]] = {}

    def field_names(self) -> List[str]:
        return [f.name for f in fields(self)]


# Handshake and membership

@control
@dataclass
class Hello(ControlMessage):
    TYPE: ClassVar[str] = 'Hello'
    role: str = 'driver'
    address: str = ''
    cores: int = 0
    worker_id: int = -1


@control
@dataclass
class Welcome(ControlMessage):
    TYPE: ClassVar[str] = 'Welcome'
    WIRE: ClassVar[Dict[str, str]] = {'peers': 'int_map'}
    worker_id: int = 0
    peers: Dict[int, str] = field(default_factory=dict)


@control
@dataclass
class PeerUpdate(ControlMessage):
    TYPE: ClassVar[str] = 'PeerUpdate'
    WIRE: ClassVar[Dict[str, str]] = {'peers': 'int_map'}
    peers: Dict[int, str] = field(default_factory=dict)


@control
@dataclass
class Shutdown(ControlMessage):
    TYPE: ClassVar[str] = 'Shutdown'
    reason: str = ''


# Driver <-> controller

@control
@dataclass
class DefineObjects(ControlMessage):
    TYPE: ClassVar[str] = 'DefineObjects'
    objects: List[dict] = field(default_factory=list)
    generation: int = 0


@control
@dataclass
class Ack(ControlMessage):
    TYPE: ClassVar[str] = 'Ack'
    command: str = ''
    ref: str = ''
    generation: int = 0


@control
@dataclass
class ErrorReply(ControlMessage):
    TYPE: ClassVar[str] = 'ErrorReply'
    error: str = ''
    reason: str = ''
    generation: int = 0


@control
@dataclass
class SpawnTask(ControlMessage):
    TYPE: ClassVar[str] = 'SpawnTask'
    WIRE: ClassVar[Dict[str, str]] = {'task': 'task'}
    task: Optional[Task] = None
    generation: int = 0


@control
@dataclass
class BlockStart(ControlMessage):
    TYPE: ClassVar[str] = 'BlockStart'
    block: str = ''
    record: bool = True
    generation: int = 0


@control
@dataclass
class BlockEnd(ControlMessage):
    TYPE: ClassVar[str] = 'BlockEnd'
    block: str = ''
    readback: List[int] = field(default_factory=list)
    generation: int = 0


@control
@dataclass
class TemplateInstalled(ControlMessage):
    TYPE: ClassVar[str] = 'TemplateInstalled'
    block: str = ''
    slot_count: int = 0
    param_slots: List[int] = field(default_factory=list)
    generation: int = 0


@control
@dataclass
class InvokeTemplate(ControlMessage):
    TYPE: ClassVar[str] = 'InvokeTemplate'
    WIRE: ClassVar[Dict[str, str]] = {'params': 'bytes_list'}
    block: str = ''
    task_ids: List[int] = field(default_factory=list)
    params: List[bytes] = field(default_factory=list)
    readback: List[int] = field(default_factory=list)
    generation: int = 0


@control
@dataclass
class BlockDone(ControlMessage):
    TYPE: ClassVar[str] = 'BlockDone'
    WIRE: ClassVar[Dict[str, str]] = {'values': 'bytes_map'}
    block: str = ''
    mode: str = 'explicit'
    values: Dict[int, bytes] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    generation: int = 0


@control
@dataclass
class BlockFailed(ControlMessage):
    TYPE: ClassVar[str] = 'BlockFailed'
    block: str = ''
    error: str = ''
    reason: str = ''
    generation: int = 0


@control
@dataclass
class ReadObjects(ControlMessage):
    TYPE: ClassVar[str] = 'ReadObjects'
    ids: List[int] = field(default_factory=list)
    generation: int = 0


@control
@dataclass
class ObjectValues(ControlMessage):
    TYPE: ClassVar[str] = 'ObjectValues'
    WIRE: ClassVar[Dict[str, str]] = {'values': 'bytes_map'}
    values: Dict[int, bytes] = field(default_factory=dict)
    request: int = 0
    generation: int = 0


@control
@dataclass
class RebalanceCmd(ControlMessage):
    TYPE: ClassVar[str] = 'RebalanceCmd'
    workers: List[int] = field(default_factory=list)
    generation: int = 0


@control
@dataclass
class RebalanceDone(ControlMessage):
    TYPE: ClassVar[str] = 'RebalanceDone'
    epoch: int = 0
    workers: List[int] = field(default_factory=list)
    generation: int = 0


@control
@dataclass
class CheckpointCmd(ControlMessage):
    TYPE: ClassVar[str] = 'CheckpointCmd'
    checkpoint_id: str = ''
    position: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)
    generation: int = 0


@control
@dataclass
class CheckpointDone(ControlMessage):
    TYPE: ClassVar[str] = 'CheckpointDone'
    checkpoint_id: str = ''
    generation: int = 0


@control
@dataclass
class RestoreCmd(ControlMessage):
    """Driver -> controller with only an id; controller -> worker with its share"""
    TYPE: ClassVar[str] = 'RestoreCmd'
    checkpoint_id: str = ''
    directory: str = ''
    objects: List[List[int]] = field(default_factory=list)
    generation: int = 0


@control
@dataclass
class Restored(ControlMessage):
    TYPE: ClassVar[str] = 'Restored'
    checkpoint_id: str = ''
    position: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)
    generation: int = 0


# Controller <-> worker

@control
@dataclass
class InstallLocalTemplate(ControlMessage):
    TYPE: ClassVar[str] = 'InstallLocalTemplate'
    WIRE: ClassVar[Dict[str, str]] = {'key': 'key'}
    key: Optional[TemplateKey] = None
    template: dict = field(default_factory=dict)


@control
@dataclass
class InstallAck(ControlMessage):
    TYPE: ClassVar[str] = 'InstallAck'
    WIRE: ClassVar[Dict[str, str]] = {'key': 'key'}
    key: Optional[TemplateKey] = None
    ok: bool = True
    reason: str = ''
    elapsed_us: float = 0.0


@control
@dataclass
class InvokeLocalTemplate(ControlMessage):
    TYPE: ClassVar[str] = 'InvokeLocalTemplate'
    WIRE: ClassVar[Dict[str, str]] = {'key': 'key', 'params': 'bytes_list', 'base_versions': 'int_map'}
    key: Optional[TemplateKey] = None
    instance: int = 0
    task_ids: List[int] = field(default_factory=list)
    params: List[bytes] = field(default_factory=list)
    copy_base: int = 0
    base_versions: Dict[int, int] = field(default_factory=dict)
    readback: List[int] = field(default_factory=list)


@control
@dataclass
class TemplateDone(ControlMessage):
    TYPE: ClassVar[str] = 'TemplateDone'
    WIRE: ClassVar[Dict[str, str]] = {'key': 'key', 'values': 'bytes_map'}
    key: Optional[TemplateKey] = None
    instance: int = 0
    values: Dict[int, bytes] = field(default_factory=dict)


@control
@dataclass
class ExecuteTask(ControlMessage):
    TYPE: ClassVar[str] = 'ExecuteTask'
    WIRE: ClassVar[Dict[str, str]] = {'task': 'task'}
    task: Optional[Task] = None


@control
@dataclass
class TaskDone(ControlMessage):
    TYPE: ClassVar[str] = 'TaskDone'
    task_id: int = 0


@control
@dataclass
class PatchCopy(ControlMessage):
    TYPE: ClassVar[str] = 'PatchCopy'
    object: int = 0
    version: int = 0
    src: int = 0
    dst: int = 0
    copy_ids: List[int] = field(default_factory=list)

    @property
    def recv_id(self) -> int:
        return self.copy_ids[-1]


@control
@dataclass
class PullObject(ControlMessage):
    TYPE: ClassVar[str] = 'PullObject'
    object: int = 0
    version: int = 0
    recv_task: int = 0
    requester: int = 0


@control
@dataclass
class FetchObjects(ControlMessage):
    TYPE: ClassVar[str] = 'FetchObjects'
    ids: List[int] = field(default_factory=list)
    request: int = 0


@control
@dataclass
class Heartbeat(ControlMessage):
    TYPE: ClassVar[str] = 'Heartbeat'
    worker: int = 0
    window_ms: float = 0.0
    busy_ms: float = 0.0
    idle_ms: float = 0.0
    blocked_ms: float = 0.0
    tasks_executed: int = 0


@control
@dataclass
class WorkerFault(ControlMessage):
    TYPE: ClassVar[str] = 'WorkerFault'
    worker: int = 0
    error: str = ''
    reason: str = ''
    task_id: int = 0


# Worker <-> worker data plane

@dataclass
class DataMessage:
    object: int = 0
    version: int = 0
    recv_task: int = 0
    payload: bytes = b''
