"""Worker: object store, stage registry, local templates and the task runtime"""

from .executors import InlineExecutor, PoolExecutor
from .local_template import LocalSlot, LocalTemplate
from .object_store import ObjectStore, StoredObject
from .registry import StageRegistry, builtin_registry, default_registry, spin_params
from .runtime import WorkerRuntime
from .stats import StatsTracker

__all__ = [
    'InlineExecutor',
    'LocalSlot',
    'LocalTemplate',
    'ObjectStore',
    'PoolExecutor',
    'StageRegistry',
    'StatsTracker',
    'StoredObject',
    'WorkerRuntime',
    'builtin_registry',
    'default_registry',
    'spin_params',
]
