"""Tasks, task graphs and the data directory"""

from .directory import DataDirectory, ObjectEntry, apply_writes
from .ids import (
    CONTROLLER_ID_BIT,
    CopyIdAllocator,
    TaskIdAllocator,
    TemplateKey,
    is_controller_id,
    precondition_signature,
)
from .task import Task, TaskKind
from .task_graph import (
    TaskGraph,
    check_exclusive_writes,
    find_cycle,
    insert_transfer_pair,
    ready_tasks,
    topological_order,
    validate_dag,
)

__all__ = [
    'CONTROLLER_ID_BIT',
    'CopyIdAllocator',
    'DataDirectory',
    'ObjectEntry',
    'Task',
    'TaskGraph',
    'TaskIdAllocator',
    'TaskKind',
    'TemplateKey',
    'apply_writes',
    'check_exclusive_writes',
    'find_cycle',
    'insert_transfer_pair',
    'is_controller_id',
    'precondition_signature',
    'ready_tasks',
    'topological_order',
    'validate_dag',
]
