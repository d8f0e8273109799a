"""
Exception hierarchy for templum

Every error raised by the runtime derives from TemplumError so callers at a
process boundary can catch one type and forward the class name and reason.
"""

from typing import List, Optional


class TemplumError(Exception):
    """Base class for all templum errors"""


class ConfigError(TemplumError):
    """Invalid or unreadable configuration"""


# Graph core

class GraphError(TemplumError):
    """Structural problem in a task or task graph"""


class CycleError(GraphError):
    """The `before` edges of a graph contain a cycle"""

    def __init__(self, cycle: List[int]):
        self.cycle = list(cycle)
        super().__init__(f"dependency cycle through tasks {self.cycle}")


class DanglingDependencyError(GraphError):
    """A dependency is neither in the graph nor declared external"""

    def __init__(self, task_id: int, missing: int):
        self.task_id = task_id
        self.missing = missing
        super().__init__(f"task {task_id} depends on unknown task {missing}")


class TransferError(GraphError):
    """A send/recv pair was requested for an invalid producer/consumer edge"""


class ExclusiveWriteError(GraphError):
    """Two tasks write the same object without being ordered"""


class UnknownObjectError(TemplumError):
    """The data directory has no entry for an object"""

    def __init__(self, object_id: int):
        self.object_id = object_id
        super().__init__(f"unknown object {object_id}")


# Wire protocol

class ProtocolError(TemplumError):
    """Base class for wire-level errors"""


class FramingError(ProtocolError):
    """Frame length does not match its payload; the connection must close"""


class FrameTooLargeError(FramingError):
    """Payload exceeds the frame size cap"""


class BadVersionError(ProtocolError):
    """Payload carries an unsupported protocol version byte"""


class UnknownTagError(ProtocolError):
    """Payload names a message type this build does not know"""


class MalformedBodyError(ProtocolError):
    """Payload is truncated or its body does not parse"""


# Templates

class TemplateError(TemplumError):
    """Template construction, install or invocation failed"""


class UnknownBlockError(TemplateError):
    """No controller template exists for a block"""


class InvocationError(TemplateError):
    """Template invoked with the wrong number of ids or stale ids"""


class InstallError(TemplateError):
    """A worker refused a local template"""


class UnrecoverableObjectError(TemplumError):
    """The latest copy of an object is held by no live worker"""

    def __init__(self, object_id: int):
        self.object_id = object_id
        super().__init__(f"object {object_id} has no live holder")


class CheckpointIntegrityError(TemplumError):
    """A checkpoint manifest or snapshot file is missing or inconsistent"""


class RebalanceError(TemplumError):
    """A rebalance command cannot be applied"""


# Worker

class KernelError(TemplumError):
    """A compute kernel failed or was given malformed inputs"""


class VersionMismatchError(TemplumError):
    """A worker copy is not at the version the task expects"""

    def __init__(self, object_id: int, expected: int, actual: int, task_id: Optional[int] = None):
        self.object_id = object_id
        self.expected = expected
        self.actual = actual
        self.task_id = task_id
        super().__init__(
            f"object {object_id} at version {actual}, task {task_id} expects {expected}"
        )


# Driver

class DriverError(TemplumError):
    """Misuse of the driver API"""


class BlockShapeError(DriverError):
    """A templated block spawned a different task structure than it recorded"""


class BlockFailedError(DriverError):
    """The controller reported a failed block"""

    def __init__(self, block: str, error: str, reason: str):
        self.block = block
        self.error = error
        self.reason = reason
        super().__init__(f"block {block!r} failed: {error}: {reason}")


class RestartFromCheckpoint(DriverError):
    """The controller restored a checkpoint; driver loop state must be reset"""

    def __init__(self, checkpoint_id: str, position: dict, state: dict, generation: int):
        self.checkpoint_id = checkpoint_id
        self.position = position
        self.state = state
        self.generation = generation
        super().__init__(f"restored checkpoint {checkpoint_id} (generation {generation})")


class ExperimentError(TemplumError):
    """A harness experiment failed"""
