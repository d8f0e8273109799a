"""Controller: assignment, planning, templates, checkpoints and the scheduling core"""

from .assignment import EpochRegistry, Placement, assign_task, compute_assignment
from .checkpoint import CheckpointManifest, CheckpointStore, snapshot_name, snapshot_path
from .core import API, DRIVER, ControllerCore
from .load_monitor import LoadMonitor
from .planner import Planner, Postcondition
from .templates import (
    ControllerTemplate,
    TemplateCache,
    TemplateRecorder,
    WorkerTemplateCentral,
    generate_worker_templates,
    invoke,
    validate_and_patch,
)

__all__ = [
    'API',
    'CheckpointManifest',
    'CheckpointStore',
    'ControllerCore',
    'ControllerTemplate',
    'DRIVER',
    'EpochRegistry',
    'LoadMonitor',
    'Placement',
    'Planner',
    'Postcondition',
    'TemplateCache',
    'TemplateRecorder',
    'WorkerTemplateCentral',
    'assign_task',
    'compute_assignment',
    'generate_worker_templates',
    'invoke',
    'snapshot_name',
    'snapshot_path',
    'validate_and_patch',
]
