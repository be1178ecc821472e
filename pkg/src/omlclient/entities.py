"""Immutable domain types for datasets, tasks, flows, runs, suites and evaluations.

Every entity is a frozen dataclass. Unordered maps are stored as read-only
mapping proxies so that equality ignores insertion order; ordered collections
are tuples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import singledispatch
from types import MappingProxyType
from typing import Any, Iterator, Mapping, Sequence

FEATURE_KINDS = ("numeric", "nominal", "string", "date")
TASK_TYPES = ("supervised_classification", "supervised_regression")
ESTIMATION_KINDS = ("crossvalidation", "holdout")
MAX_FLOW_DEPTH = 32


def _frozen_map(value: Mapping | None) -> Mapping:
    return MappingProxyType(dict(value or {}))


@dataclass(frozen=True)
class Feature:
    index: int
    name: str
    kind: str
    nominal_values: tuple[str, ...] = ()
    missing_count: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "nominal_values", tuple(self.nominal_values))


@dataclass(frozen=True)
class DatasetDescription:
    name: str
    version: int = 1
    features: tuple[Feature, ...] = ()
    default_target_attribute: str | None = None
    file_checksum: str = ""
    qualities: Mapping[str, float] = field(default_factory=dict)
    id: int | None = None
    # server-assigned location of the payload; not part of identity
    url: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "qualities", _frozen_map(self.qualities))

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)


@dataclass(frozen=True)
class EstimationProcedure:
    kind: str = "crossvalidation"
    repeats: int = 1
    folds: int | None = 10
    percentage: float | None = None
    splits_ref: str | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Task:
    task_type: str
    dataset_id: int
    target_name: str
    estimation_procedure: EstimationProcedure
    class_labels: tuple[str, ...] = ()
    id: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "class_labels", tuple(self.class_labels))


@dataclass(frozen=True)
class FlowParameter:
    name: str
    default_value: str
    kind: str = "str"


@dataclass(frozen=True)
class Flow:
    name: str
    external_version: str
    parameters: tuple[FlowParameter, ...] = ()
    components: tuple[tuple[str, "Flow"], ...] = ()
    dependencies: str = ""
    id: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "components", tuple((r, c) for r, c in self.components))

    def component(self, role: str) -> Flow:
        for r, c in self.components:
            if r == role:
                return c
        raise KeyError(role)

    def parameter(self, name: str) -> FlowParameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    def walk(self, prefix: str = "") -> Iterator[tuple[str, Flow]]:
        """Yield ``(path_prefix, flow)`` for this flow and every component, depth first.

        The prefix is the dotted role path from the root, e.g. ``"inner.learner."``.
        """
        yield prefix, self
        for role, child in self.components:
            yield from child.walk(f"{prefix}{role}.")

    def parameter_paths(self) -> list[str]:
        return [f"{prefix}{p.name}" for prefix, flow in self.walk() for p in flow.parameters]

    def resolve(self, path: str) -> tuple[Flow, FlowParameter]:
        """Return the owning flow and parameter for a dotted setup path."""
        *roles, name = path.split(".")
        flow = self
        for role in roles:
            flow = flow.component(role)
        return flow, flow.parameter(name)


@dataclass(frozen=True)
class PredictionRow:
    repeat: int
    fold: int
    row_id: int
    prediction: Any
    truth: Any
    confidences: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "confidences", tuple(self.confidences))


@dataclass(frozen=True)
class TraceRow:
    repeat: int
    fold: int
    iteration: int
    setup_string: str
    evaluation: float
    selected: bool


@dataclass(frozen=True)
class Trace:
    rows: tuple[TraceRow, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))


@dataclass(frozen=True)
class Run:
    task_id: int
    flow_id: int | None
    setup: tuple[tuple[str, str], ...]
    seed: int
    predictions: tuple[PredictionRow, ...] = ()
    trace: Trace | None = None
    local_evaluations: Mapping[str, float] = field(default_factory=dict)
    id: int | None = None
    # the flow tree the setup refers to; carried alongside, never on the wire
    flow: Flow | None = field(default=None, compare=False, repr=False)
    predictions_url: str | None = field(default=None, compare=False, repr=False)
    predictions_checksum: str | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "setup", tuple((str(k), str(v)) for k, v in self.setup))
        object.__setattr__(self, "predictions", tuple(self.predictions))
        object.__setattr__(self, "local_evaluations", _frozen_map(self.local_evaluations))


@dataclass(frozen=True)
class Suite:
    alias: str
    name: str
    task_ids: tuple[int, ...]
    id: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_ids", tuple(self.task_ids))


@dataclass(frozen=True)
class EvaluationRecord:
    run_id: int
    task_id: int
    flow_id: int
    function: str
    value: float
    parameters: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "parameters", _frozen_map(self.parameters))


def without_ids(flow: Flow) -> Flow:
    """Copy of ``flow`` with the root and all component ids cleared."""
    return replace(
        flow,
        id=None,
        components=tuple((role, without_ids(child)) for role, child in flow.components),
    )


# -- validation ---------------------------------------------------------------


def _positive(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value > 0


@singledispatch
def validate(entity: Any) -> list[str]:
    """Return the invariant violations of ``entity``; an empty list means valid."""
    raise TypeError(f"not an entity: {type(entity).__name__}")


@validate.register
def _(entity: Feature) -> list[str]:
    errors = []
    if not entity.name:
        errors.append("feature name must be non-empty")
    if entity.kind not in FEATURE_KINDS:
        errors.append(f"feature kind not recognised: {entity.kind}")
    if entity.kind == "nominal" and not entity.nominal_values:
        errors.append(f"nominal feature without values: {entity.name}")
    if entity.kind != "nominal" and entity.nominal_values:
        errors.append(f"non-nominal feature with nominal values: {entity.name}")
    if len(set(entity.nominal_values)) != len(entity.nominal_values):
        errors.append(f"nominal values not unique: {entity.name}")
    if entity.missing_count < 0:
        errors.append(f"missing_count must be >= 0: {entity.name}")
    return errors


@validate.register
def _(entity: DatasetDescription) -> list[str]:
    errors = []
    if entity.id is not None and not _positive(entity.id):
        errors.append("id must be a positive integer")
    if not entity.name:
        errors.append("name must be non-empty")
    if not _positive(entity.version):
        errors.append("version must be a positive integer")
    names = [f.name for f in entity.features]
    seen: set[str] = set()
    for n in names:
        if n in seen:
            errors.append(f"feature name not unique: {n}")
        seen.add(n)
    for expected, f in enumerate(entity.features):
        if f.index != expected:
            errors.append(f"feature indices not contiguous at {f.name}: {f.index} != {expected}")
        errors.extend(validate(f))
    target = entity.default_target_attribute
    if target is not None and target not in seen:
        errors.append(f"default_target_attribute is not a feature: {target}")
    if entity.file_checksum and not _is_md5(entity.file_checksum):
        errors.append("file_checksum must be a hex MD5 digest")
    for key, value in entity.qualities.items():
        if not isinstance(value, (int, float)):
            errors.append(f"quality is not a real number: {key}")
    return errors


def _is_md5(text: str) -> bool:
    return len(text) == 32 and all(c in "0123456789abcdef" for c in text.lower())


@validate.register
def _(entity: EstimationProcedure) -> list[str]:
    errors = []
    if entity.kind not in ESTIMATION_KINDS:
        errors.append(f"estimation procedure kind not recognised: {entity.kind}")
    if not _positive(entity.repeats):
        errors.append("repeats must be >= 1")
    if entity.kind == "crossvalidation":
        if not isinstance(entity.folds, int) or entity.folds < 2:
            errors.append("folds must be >= 2 for crossvalidation")
    elif entity.kind == "holdout":
        if entity.percentage is None or not 0 < entity.percentage < 100:
            errors.append("percentage must lie in (0, 100) for holdout")
    return errors


@validate.register
def _(entity: Task) -> list[str]:
    errors = []
    if entity.id is not None and not _positive(entity.id):
        errors.append("id must be a positive integer")
    if entity.task_type not in TASK_TYPES:
        errors.append(f"task_type not recognised: {entity.task_type}")
    if not _positive(entity.dataset_id):
        errors.append("dataset_id must be a positive integer")
    if not entity.target_name:
        errors.append("target_name must be non-empty")
    if entity.task_type == "supervised_classification":
        if len(entity.class_labels) < 2:
            errors.append("class_labels must have >= 2 entries")
        if len(set(entity.class_labels)) != len(entity.class_labels):
            errors.append("class_labels not unique")
    errors.extend(validate(entity.estimation_procedure))
    return errors


def check_task_against_dataset(task: Task, dataset: DatasetDescription) -> list[str]:
    """Cross-entity rule: the task target must be a feature of its dataset."""
    if task.target_name not in {f.name for f in dataset.features}:
        return [f"target_name is not a feature of dataset {dataset.id}: {task.target_name}"]
    return []


@validate.register
def _(entity: Flow) -> list[str]:
    return _validate_flow(entity, depth=1, active=set())


def _validate_flow(flow: Flow, depth: int, active: set[int]) -> list[str]:
    if id(flow) in active:
        return [f"component cycle at flow {flow.name}"]
    if depth > MAX_FLOW_DEPTH:
        return [f"flow tree deeper than {MAX_FLOW_DEPTH} levels"]
    errors = []
    if flow.id is not None and not _positive(flow.id):
        errors.append("id must be a positive integer")
    if not flow.name or any(not part for part in flow.name.split(".")):
        errors.append(f"flow name must be a dotted identifier: {flow.name!r}")
    seen: set[str] = set()
    for p in flow.parameters:
        if p.name in seen:
            errors.append(f"parameter name not unique: {p.name}")
        seen.add(p.name)
    roles: set[str] = set()
    active = active | {id(flow)}
    for role, child in flow.components:
        if role in roles:
            errors.append(f"component role not unique: {role}")
        roles.add(role)
        errors.extend(_validate_flow(child, depth + 1, active))
    return errors


@validate.register
def _(entity: PredictionRow) -> list[str]:
    errors = []
    for name in ("repeat", "fold", "row_id"):
        value = getattr(entity, name)
        if not isinstance(value, int) or value < 0:
            errors.append(f"{name} must be a non-negative integer")
    if entity.confidences:
        if any(not 0.0 <= c <= 1.0 for c in entity.confidences):
            errors.append(f"confidence outside [0, 1] at row {entity.row_id}")
        if abs(math.fsum(entity.confidences) - 1.0) > 1e-6:
            errors.append(f"confidences do not sum to 1 at row {entity.row_id}")
    return errors


@validate.register
def _(entity: Trace) -> list[str]:
    selected: dict[tuple[int, int], int] = {}
    for row in entity.rows:
        key = (row.repeat, row.fold)
        selected[key] = selected.get(key, 0) + int(row.selected)
    return [
        f"trace must select exactly one row for repeat {r} fold {f}, found {n}"
        for (r, f), n in sorted(selected.items())
        if n != 1
    ]


@validate.register
def _(entity: Run) -> list[str]:
    errors = []
    if entity.id is not None and not _positive(entity.id):
        errors.append("id must be a positive integer")
    if not _positive(entity.task_id):
        errors.append("task_id must be a positive integer")
    if entity.flow_id is not None and not _positive(entity.flow_id):
        errors.append("flow_id must be a positive integer")
    if not isinstance(entity.seed, int) or not -(2**63) <= entity.seed < 2**63:
        errors.append("seed must be a 64-bit integer")
    keys: set[tuple[int, int, int]] = set()
    for row in entity.predictions:
        key = (row.repeat, row.fold, row.row_id)
        if key in keys:
            errors.append(f"duplicate prediction for repeat/fold/row_id {key}")
        keys.add(key)
        errors.extend(validate(row))
    if entity.flow is not None:
        known = set(entity.flow.parameter_paths())
        for path, _value in entity.setup:
            if path not in known:
                errors.append(f"setup path does not resolve to a flow parameter: {path}")
    if entity.trace is not None:
        errors.extend(validate(entity.trace))
    return errors


@validate.register
def _(entity: Suite) -> list[str]:
    errors = []
    if not entity.alias:
        errors.append("alias must be non-empty")
    if not entity.task_ids:
        errors.append("task_ids must be non-empty")
    if any(not _positive(t) for t in entity.task_ids):
        errors.append("task_ids must be positive integers")
    if len(set(entity.task_ids)) != len(entity.task_ids):
        errors.append("task_ids contain duplicates")
    return errors


@validate.register
def _(entity: EvaluationRecord) -> list[str]:
    errors = []
    for name in ("run_id", "task_id", "flow_id"):
        if not _positive(getattr(entity, name)):
            errors.append(f"{name} must be a positive integer")
    if not entity.function:
        errors.append("function must be non-empty")
    if not math.isfinite(entity.value):
        errors.append("value must be finite")
    return errors


def canonical_flow_name(flow: Flow) -> str:
    """Name a flow tree deterministically.

    Leaves keep their own name; composites render as
    ``name(role=childname,...)`` with roles in component order.

    >>> canonical_flow_name(Flow("ref.majority", "1"))
    'ref.majority'
    """
    if not flow.components:
        return flow.name
    inner = ",".join(f"{role}={canonical_flow_name(child)}" for role, child in flow.components)
    return f"{flow.name}({inner})"


def setup_dict(setup: Sequence[tuple[str, str]]) -> dict[str, str]:
    return {k: v for k, v in setup}
