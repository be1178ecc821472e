"""Client for an OpenML-style experiment platform: data, tasks, flows, runs."""

from .arff import DataTable
from .cache import CacheConfig
from .entities import DatasetDescription, Flow, Run, Suite, Task
from .extension import ModelSpec, flow_to_model, model_to_flow
from .protocol import get_entity, list_entities, list_evaluations_setups, publish_entity
from .runner import run_model_on_task
from .transport import ServerConfig

__version__ = "0.1.0"

__all__ = [
    "CacheConfig",
    "DataTable",
    "DatasetDescription",
    "Flow",
    "ModelSpec",
    "Run",
    "ServerConfig",
    "Suite",
    "Task",
    "flow_to_model",
    "get_entity",
    "list_entities",
    "list_evaluations_setups",
    "model_to_flow",
    "publish_entity",
    "run_model_on_task",
]
