"""Client side of the platform's REST/XML protocol.

Endpoints::

    GET  {base}/data/{id}   {base}/task/{id}   {base}/flow/{id}
    GET  {base}/run/{id}    {base}/study/{alias}
    GET  {base}/{kind}/list/<key>/<value>/...
    POST {base}/data | task | flow | run      (multipart, ?api_key=...)

Every read accepts an optional :class:`~omlclient.cache.CacheConfig`; when
given, descriptions are served from and stored in the local cache.
"""

from __future__ import annotations

import urllib.parse
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

from . import arff, cache as cachemod, codec, predictions, transport
from .codec import DecodeError
from .entities import (
    DatasetDescription,
    EstimationProcedure,
    EvaluationRecord,
    Feature,
    Flow,
    Run,
    Suite,
    Task,
    canonical_flow_name,
    validate,
)
from .transport import ApiError, ServerConfig, TransportError, decode_error

__all__ = [
    "ApiError",
    "DecodeError",
    "EvaluationTable",
    "ServerConfig",
    "TransportError",
    "decode_error",
    "get_entity",
    "list_entities",
    "list_evaluations_setups",
    "publish_entity",
]

ENDPOINTS = {"dataset": "data", "task": "task", "flow": "flow", "run": "run", "suite": "study", "evaluation": "evaluation"}
AUTH_REQUIRED = 102
FIXED_COLUMNS = ("run_id", "task_id", "flow_id", "function", "value")


def _segment(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        value = ",".join(str(v) for v in value)
    return urllib.parse.quote(str(value), safe=",")


def _cached_description(cfg: ServerConfig, kind: str, key: int | str, path: str, cache: cachemod.CacheConfig | None) -> bytes:
    fetch = lambda: transport.get(cfg, path)  # noqa: E731
    if cache is None:
        return fetch()
    return cachemod.fetch_cached(cache, (kind, key, "description"), None, fetch, host=cfg.host)


def _check(kind: str, entity: Any) -> Any:
    problems = validate(entity)
    if problems:
        raise DecodeError(f"server sent an invalid {kind}: " + "; ".join(problems))
    return entity


def get_entity(cfg: ServerConfig, kind: str, id_or_alias: int | str, cache: cachemod.CacheConfig | None = None) -> Any:
    """Fetch and decode one entity.

    Runs come back with their predictions loaded and their flow attached.
    Dataset payloads are not downloaded here, see
    :func:`omlclient.cache.fetch_dataset_payload`.
    """
    if kind not in codec.DECODERS:
        raise ValueError(f"unknown entity kind {kind!r}")
    if isinstance(id_or_alias, int):
        if id_or_alias <= 0:
            raise ValueError("id must be positive")
    elif not id_or_alias:
        raise ValueError("alias must be non-empty")
    key = id_or_alias
    path = f"{ENDPOINTS[kind]}/{_segment(key)}"
    entity = _check(kind, codec.decode(kind, _cached_description(cfg, kind, key, path, cache)))
    if kind == "run":
        entity = _complete_run(cfg, entity, cache)
    return entity


def _complete_run(cfg: ServerConfig, run: Run, cache: cachemod.CacheConfig | None) -> Run:
    rows: list = []
    if run.predictions_url:
        fetch = lambda: transport.get(cfg, run.predictions_url)  # noqa: E731
        if cache is None:
            data = fetch()
        else:
            data = cachemod.fetch_cached(cache, ("run", run.id, "predictions"), run.predictions_checksum, fetch, host=cfg.host)
        rows = predictions.rows_from_document(arff.parse(data))
    flow = get_entity(cfg, "flow", run.flow_id, cache) if run.flow_id else None
    return _check("run", replace(run, predictions=tuple(rows), flow=flow))


def fetch_predictions_arff(cfg: ServerConfig, run: Run, cache: cachemod.CacheConfig | None = None) -> bytes:
    """Raw bytes of a published run's predictions file."""
    if not run.predictions_url:
        raise ValueError("run has no predictions file")
    fetch = lambda: transport.get(cfg, run.predictions_url)  # noqa: E731
    if cache is None:
        return fetch()
    return cachemod.fetch_cached(cache, ("run", run.id, "predictions"), run.predictions_checksum, fetch, host=cfg.host)


def list_entities(
    cfg: ServerConfig,
    kind: str,
    filters: Mapping[str, Any] | None = None,
    paging: tuple[int, int] = (0, 100),
    cache: cachemod.CacheConfig | None = None,
) -> list[dict[str, Any]]:
    """Summaries of entities matching all ``filters``, ascending by id."""
    offset, limit = paging
    if not 1 <= limit <= 10000:
        raise ValueError("limit must lie in [1, 10000]")
    if offset < 0:
        raise ValueError("offset must be >= 0")
    segments = [ENDPOINTS[kind], "list", "limit", str(limit), "offset", str(offset)]
    for name in sorted(filters or {}):
        segments += [_segment(name), _segment(filters[name])]
    path = "/".join(segments)
    fetch = lambda: transport.get(cfg, path)  # noqa: E731
    data = fetch() if cache is None else cachemod.fetch_listing(cache, kind, path, fetch, host=cfg.host)
    return codec.decode_listing(data)


@dataclass(frozen=True)
class EvaluationTable:
    """Evaluation records flattened to rows; ``None`` marks a missing cell."""

    columns: tuple[str, ...]
    rows: tuple[tuple[Any, ...], ...]

    def column(self, name: str) -> list[Any]:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def as_dicts(self) -> list[dict[str, Any]]:
        return [dict(zip(self.columns, row)) for row in self.rows]


def fetch_evaluations(
    cfg: ServerConfig,
    function: str,
    flows: Sequence[int] = (),
    tasks: Sequence[int] = (),
    cache: cachemod.CacheConfig | None = None,
) -> list[EvaluationRecord]:
    if not function:
        raise ValueError("function must be non-empty")
    if not flows and not tasks:
        raise ValueError("at least one of flows or tasks is required")
    segments = ["evaluation", "list", "function", _segment(function)]
    if flows:
        segments += ["flow", _segment(sorted(flows))]
    if tasks:
        segments += ["task", _segment(sorted(tasks))]
    path = "/".join(segments)
    fetch = lambda: transport.get(cfg, path)  # noqa: E731
    data = fetch() if cache is None else cachemod.fetch_listing(cache, "evaluation", path, fetch, host=cfg.host)
    return sorted(codec.decode_evaluations(data), key=lambda r: r.run_id)


def evaluation_table(records: Sequence[EvaluationRecord], parameters_in_separate_columns: bool = True) -> EvaluationTable:
    fixed = [(r.run_id, r.task_id, r.flow_id, r.function, r.value) for r in records]
    if not parameters_in_separate_columns:
        return EvaluationTable(
            FIXED_COLUMNS + ("parameters",),
            tuple(row + (dict(r.parameters),) for row, r in zip(fixed, records)),
        )
    names = sorted({name for r in records for name in r.parameters})
    return EvaluationTable(
        FIXED_COLUMNS + tuple(names),
        tuple(row + tuple(r.parameters.get(n) for n in names) for row, r in zip(fixed, records)),
    )


def list_evaluations_setups(
    cfg: ServerConfig,
    function: str,
    flows: Sequence[int] = (),
    tasks: Sequence[int] = (),
    parameters_in_separate_columns: bool = True,
    cache: cachemod.CacheConfig | None = None,
) -> EvaluationTable:
    """One row per matching run with its hyperparameter setup.

    Parameter columns use the names the server stores, which are prefixed with
    the owning flow, e.g. ``sklearn.svm.classes.SVC(16)_C``.
    """
    records = fetch_evaluations(cfg, function, flows, tasks, cache)
    return evaluation_table(records, parameters_in_separate_columns)


def publish_entity(cfg: ServerConfig, entity: Any, attachments: Mapping[str, bytes] | None = None) -> int:
    """Upload ``entity`` plus named attachments and return the assigned id."""
    problems = validate(entity)
    if problems:
        raise ValueError("refusing to publish an invalid entity: " + "; ".join(problems))
    if not cfg.api_key:
        raise ApiError(401, AUTH_REQUIRED, "an API key is required to publish")
    kind = {DatasetDescription: "dataset", Task: "task", Flow: "flow", Run: "run", Suite: "suite"}[type(entity)]
    files = {"description": codec.encode(entity), **(attachments or {})}
    body = transport.request(cfg, "POST", cfg.url(ENDPOINTS[kind]), files=files, authenticated=True)
    return codec.decode_upload_ack(body)


def flow_exists_key(flow: Flow) -> tuple[str, str]:
    """Identity the server deduplicates flows on."""
    return canonical_flow_name(flow), flow.external_version


def describe_features(doc: arff.ArffDocument) -> tuple[Feature, ...]:
    """Feature metadata derived from an ARFF document."""
    out = []
    for i, a in enumerate(doc.attributes):
        missing = sum(1 for row in doc.rows if row[i] is None)
        out.append(Feature(i, a.name, a.kind, a.nominal_values, missing))
    return tuple(out)


def publish_dataset(cfg: ServerConfig, description: DatasetDescription, payload: bytes) -> int:
    """Upload a dataset draft with its ARFF payload.

    Checksum and, when the draft lists none, features are filled in from the
    payload.
    """
    doc = arff.parse(payload)
    draft = replace(
        description,
        id=None,
        features=description.features or describe_features(doc),
        file_checksum=cachemod.md5_hex(payload),
    )
    return publish_entity(cfg, draft, {"dataset": payload})


def classification_task(dataset: DatasetDescription, target: str | None = None, folds: int = 10, repeats: int = 1) -> Task:
    """Draft a cross-validated classification task on ``dataset``."""
    target = target or dataset.default_target_attribute
    if target is None:
        raise ValueError("dataset has no default target; name one")
    feature = dataset.feature(target)
    if feature.kind != "nominal":
        raise ValueError(f"target {target!r} is not nominal")
    return Task(
        task_type="supervised_classification",
        dataset_id=dataset.id,
        target_name=target,
        estimation_procedure=EstimationProcedure("crossvalidation", repeats, folds),
        class_labels=feature.nominal_values,
    )
