"""Learner-extension contract and registry.

An extension converts between its library's models and flows, trains on a
fold and predicts. Extensions are registered once per flavor, and each claims
exactly one flow-name namespace prefix (``ref.`` for the built-in family).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Protocol, Sequence

from ..arff import DataTable
from ..entities import Flow, TraceRow


class UnknownFlavorError(LookupError):
    pass


class UnknownFlowError(LookupError):
    pass


class InvalidParameterError(ValueError):
    pass


class InvalidModelError(ValueError):
    pass


class DegenerateFoldError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """A node of a learner structure tree.

    ``params`` holds every parameter of the node kind, in declaration order,
    as strings. ``children`` are the sub-models in declaration order.
    """

    flavor: str
    kind: str
    params: tuple[tuple[str, str], ...] = ()
    children: tuple["ModelSpec", ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple((str(k), str(v)) for k, v in self.params))
        object.__setattr__(self, "children", tuple(self.children))

    def param(self, name: str) -> str:
        for k, v in self.params:
            if k == name:
                return v
        raise KeyError(name)


@dataclass(frozen=True)
class FoldPrediction:
    row_id: int
    prediction: str
    confidences: tuple[float, ...]


class Extension(Protocol):
    flavor: str
    prefix: str
    version: str

    def model_to_flow(self, model: ModelSpec) -> Flow: ...

    def flow_to_model(self, flow: Flow, setup: Mapping[str, str] | Sequence[tuple[str, str]] | None = None) -> ModelSpec: ...

    def fit_predict_fold(
        self,
        model: ModelSpec,
        table: DataTable,
        target: str,
        class_labels: Sequence[str],
        train_idx: Sequence[int],
        test_idx: Sequence[int],
        seed: int,
    ) -> tuple[list[FoldPrediction], list[TraceRow] | None]: ...


_REGISTRY: dict[str, Any] = {}


def register_extension(ext: Any) -> None:
    if ext.flavor in _REGISTRY and _REGISTRY[ext.flavor] is not ext:
        raise ValueError(f"flavor already registered: {ext.flavor}")
    for other in _REGISTRY.values():
        if other is not ext and (other.prefix.startswith(ext.prefix) or ext.prefix.startswith(other.prefix)):
            raise ValueError(f"flow namespace {ext.prefix!r} overlaps {other.prefix!r}")
    _REGISTRY[ext.flavor] = ext


def get_extension(flavor: str) -> Any:
    try:
        return _REGISTRY[flavor]
    except KeyError:
        raise UnknownFlavorError(f"no extension registered for flavor {flavor!r}") from None


def extension_for_flow(flow: Flow) -> Any:
    for ext in _REGISTRY.values():
        if flow.name.startswith(ext.prefix):
            return ext
    raise UnknownFlowError(f"no registered extension handles flow {flow.name!r}")


def model_to_flow(model: ModelSpec) -> Flow:
    return get_extension(model.flavor).model_to_flow(model)


def flow_to_model(flow: Flow, setup=None) -> ModelSpec:
    return extension_for_flow(flow).flow_to_model(flow, setup)


def fit_predict_fold(model: ModelSpec, table: DataTable, target: str, class_labels, train_idx, test_idx, seed: int):
    return get_extension(model.flavor).fit_predict_fold(
        model, table, target, class_labels, train_idx, test_idx, seed
    )


def setup_of(model: ModelSpec) -> list[tuple[str, str]]:
    """Parameter assignments of ``model`` keyed by dotted path from the root flow."""
    flow = model_to_flow(model)
    return [(f"{prefix}{p.name}", p.default_value) for prefix, f in flow.walk() for p in f.parameters]


from . import reference  # noqa: E402  (registers the built-in family)

__all__ = [
    "DegenerateFoldError",
    "Extension",
    "FoldPrediction",
    "InvalidModelError",
    "InvalidParameterError",
    "ModelSpec",
    "UnknownFlavorError",
    "UnknownFlowError",
    "extension_for_flow",
    "fit_predict_fold",
    "flow_to_model",
    "get_extension",
    "model_to_flow",
    "reference",
    "register_extension",
    "setup_of",
]
