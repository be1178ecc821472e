"""XML wire format for platform entities.

One root element per entity kind, lower_snake_case child elements, and lists
written as a container element repeating its child. Encoding is deterministic
(fixed element order, shortest round-trip floats) so encoded bytes can be
compared directly. The mock server uses this same module, so client and server
cannot drift apart.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from typing import Any, Callable, Iterable

from .arff import format_number
from .entities import (
    DatasetDescription,
    EstimationProcedure,
    EvaluationRecord,
    Feature,
    Flow,
    FlowParameter,
    Run,
    Suite,
    Task,
    Trace,
    TraceRow,
)

ROOTS = {
    DatasetDescription: "dataset",
    Task: "task",
    Flow: "flow",
    Run: "run",
    Suite: "study",
}


_NOT_XML = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ud800-\udfff\ufffe\uffff]")


class DecodeError(ValueError):
    pass


def _sub(parent: ET.Element, tag: str, value: Any = None) -> ET.Element:
    el = ET.SubElement(parent, tag)
    if value is not None:
        text = format_number(value) if isinstance(value, float) else str(value)
        if _NOT_XML.search(text):
            raise ValueError(f"<{tag}> value contains characters XML 1.0 cannot carry: {text!r}")
        el.text = text
    return el


def _opt(parent: ET.Element, tag: str, value: Any) -> None:
    if value is not None:
        _sub(parent, tag, value)


def _tostring(root: ET.Element) -> bytes:
    # a raw CR would be read back as LF; markup itself never contains one
    return ET.tostring(root, encoding="utf-8", xml_declaration=True).replace(b"\r", b"&#13;")


def _parse(data: bytes | str, root_tag: str) -> ET.Element:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise DecodeError(f"malformed XML: {exc}") from None
    if root.tag != root_tag:
        raise DecodeError(f"expected <{root_tag}> root, got <{root.tag}>")
    return root


def _text(el: ET.Element, tag: str, conv: Callable[[str], Any] = str, default: Any = ...) -> Any:
    child = el.find(tag)
    if child is None:
        if default is ...:
            raise DecodeError(f"<{el.tag}> lacks <{tag}>")
        return default
    text = child.text or ""
    try:
        return conv(text)
    except ValueError:
        raise DecodeError(f"<{tag}> has invalid value {text!r}") from None


def _int(text: str | None) -> int:
    try:
        return int(text or "")
    except ValueError:
        raise DecodeError(f"expected an integer, got {text!r}") from None


def _bool(text: str) -> bool:
    if text not in ("true", "false"):
        raise ValueError(text)
    return text == "true"


def _items(el: ET.Element, container: str, item: str) -> list[ET.Element]:
    box = el.find(container)
    return [] if box is None else box.findall(item)


# -- dataset ------------------------------------------------------------------


def _encode_feature(parent: ET.Element, f: Feature) -> None:
    el = _sub(parent, "feature")
    _sub(el, "index", f.index)
    _sub(el, "name", f.name)
    _sub(el, "kind", f.kind)
    values = _sub(el, "nominal_values")
    for v in f.nominal_values:
        _sub(values, "nominal_value", v)
    _sub(el, "missing_count", f.missing_count)


def _decode_feature(el: ET.Element) -> Feature:
    return Feature(
        index=_text(el, "index", int),
        name=_text(el, "name"),
        kind=_text(el, "kind"),
        nominal_values=tuple(v.text or "" for v in _items(el, "nominal_values", "nominal_value")),
        missing_count=_text(el, "missing_count", int),
    )


def encode_dataset(d: DatasetDescription) -> bytes:
    root = ET.Element("dataset")
    _opt(root, "id", d.id)
    _sub(root, "name", d.name)
    _sub(root, "version", d.version)
    _opt(root, "default_target_attribute", d.default_target_attribute)
    _sub(root, "file_checksum", d.file_checksum)
    _opt(root, "url", d.url)
    features = _sub(root, "features")
    for f in d.features:
        _encode_feature(features, f)
    qualities = _sub(root, "qualities")
    for name in sorted(d.qualities):
        q = _sub(qualities, "quality")
        _sub(q, "name", name)
        _sub(q, "value", float(d.qualities[name]))
    return _tostring(root)


def decode_dataset(data: bytes | str) -> DatasetDescription:
    root = _parse(data, "dataset")
    return DatasetDescription(
        id=_text(root, "id", int, None),
        name=_text(root, "name"),
        version=_text(root, "version", int),
        default_target_attribute=_text(root, "default_target_attribute", str, None),
        file_checksum=_text(root, "file_checksum", str, ""),
        url=_text(root, "url", str, None),
        features=tuple(_decode_feature(f) for f in _items(root, "features", "feature")),
        qualities={
            _text(q, "name"): _text(q, "value", float) for q in _items(root, "qualities", "quality")
        },
    )


# -- task ---------------------------------------------------------------------


def encode_task(t: Task) -> bytes:
    root = ET.Element("task")
    _opt(root, "id", t.id)
    _sub(root, "task_type", t.task_type)
    _sub(root, "dataset_id", t.dataset_id)
    _sub(root, "target_name", t.target_name)
    ep = t.estimation_procedure
    proc = _sub(root, "estimation_procedure")
    _sub(proc, "kind", ep.kind)
    _sub(proc, "repeats", ep.repeats)
    _opt(proc, "folds", ep.folds)
    _opt(proc, "percentage", None if ep.percentage is None else float(ep.percentage))
    _opt(proc, "splits_ref", ep.splits_ref)
    labels = _sub(root, "class_labels")
    for label in t.class_labels:
        _sub(labels, "class_label", label)
    return _tostring(root)


def decode_task(data: bytes | str) -> Task:
    root = _parse(data, "task")
    proc = root.find("estimation_procedure")
    if proc is None:
        raise DecodeError("<task> lacks <estimation_procedure>")
    return Task(
        id=_text(root, "id", int, None),
        task_type=_text(root, "task_type"),
        dataset_id=_text(root, "dataset_id", int),
        target_name=_text(root, "target_name"),
        estimation_procedure=EstimationProcedure(
            kind=_text(proc, "kind"),
            repeats=_text(proc, "repeats", int),
            folds=_text(proc, "folds", int, None),
            percentage=_text(proc, "percentage", float, None),
            splits_ref=_text(proc, "splits_ref", str, None),
        ),
        class_labels=tuple(el.text or "" for el in _items(root, "class_labels", "class_label")),
    )


# -- flow ---------------------------------------------------------------------


def _encode_flow_into(el: ET.Element, f: Flow) -> None:
    _opt(el, "id", f.id)
    _sub(el, "name", f.name)
    _sub(el, "external_version", f.external_version)
    _sub(el, "dependencies", f.dependencies)
    params = _sub(el, "parameters")
    for p in f.parameters:
        pe = _sub(params, "parameter")
        _sub(pe, "name", p.name)
        _sub(pe, "default_value", p.default_value)
        _sub(pe, "kind", p.kind)
    comps = _sub(el, "components")
    for role, child in f.components:
        ce = _sub(comps, "component")
        _sub(ce, "role", role)
        _encode_flow_into(_sub(ce, "flow"), child)


def _decode_flow_from(el: ET.Element) -> Flow:
    components = []
    for ce in _items(el, "components", "component"):
        inner = ce.find("flow")
        if inner is None:
            raise DecodeError("<component> lacks <flow>")
        components.append((_text(ce, "role"), _decode_flow_from(inner)))
    return Flow(
        id=_text(el, "id", int, None),
        name=_text(el, "name"),
        external_version=_text(el, "external_version"),
        dependencies=_text(el, "dependencies", str, ""),
        parameters=tuple(
            FlowParameter(_text(p, "name"), _text(p, "default_value"), _text(p, "kind", str, "str"))
            for p in _items(el, "parameters", "parameter")
        ),
        components=tuple(components),
    )


def encode_flow(f: Flow) -> bytes:
    root = ET.Element("flow")
    _encode_flow_into(root, f)
    return _tostring(root)


def decode_flow(data: bytes | str) -> Flow:
    return _decode_flow_from(_parse(data, "flow"))


# -- run ----------------------------------------------------------------------


def encode_run(r: Run) -> bytes:
    """Run description; predictions travel separately as an ARFF attachment."""
    root = ET.Element("run")
    _opt(root, "id", r.id)
    _sub(root, "task_id", r.task_id)
    _opt(root, "flow_id", r.flow_id)
    _sub(root, "seed", r.seed)
    setup = _sub(root, "setup")
    for path, value in r.setup:
        pe = _sub(setup, "parameter")
        _sub(pe, "name", path)
        _sub(pe, "value", value)
    evals = _sub(root, "evaluations")
    for name in sorted(r.local_evaluations):
        ee = _sub(evals, "evaluation")
        _sub(ee, "function", name)
        _sub(ee, "value", float(r.local_evaluations[name]))
    if r.trace is not None:
        trace = _sub(root, "trace")
        for t in r.trace.rows:
            te = _sub(trace, "trace_row")
            _sub(te, "repeat", t.repeat)
            _sub(te, "fold", t.fold)
            _sub(te, "iteration", t.iteration)
            _sub(te, "setup_string", t.setup_string)
            _sub(te, "evaluation", float(t.evaluation))
            _sub(te, "selected", "true" if t.selected else "false")
    _opt(root, "predictions_url", r.predictions_url)
    _opt(root, "predictions_checksum", r.predictions_checksum)
    return _tostring(root)


def decode_run(data: bytes | str) -> Run:
    root = _parse(data, "run")
    trace = None
    trace_el = root.find("trace")
    if trace_el is not None:
        trace = Trace(
            tuple(
                TraceRow(
                    repeat=_text(t, "repeat", int),
                    fold=_text(t, "fold", int),
                    iteration=_text(t, "iteration", int),
                    setup_string=_text(t, "setup_string", str, ""),
                    evaluation=_text(t, "evaluation", float),
                    selected=_text(t, "selected", _bool),
                )
                for t in trace_el.findall("trace_row")
            )
        )
    return Run(
        id=_text(root, "id", int, None),
        task_id=_text(root, "task_id", int),
        flow_id=_text(root, "flow_id", int, None),
        seed=_text(root, "seed", int),
        setup=tuple(
            (_text(p, "name"), _text(p, "value", str, "")) for p in _items(root, "setup", "parameter")
        ),
        local_evaluations={
            _text(e, "function"): _text(e, "value", float)
            for e in _items(root, "evaluations", "evaluation")
        },
        trace=trace,
        predictions_url=_text(root, "predictions_url", str, None),
        predictions_checksum=_text(root, "predictions_checksum", str, None),
    )


# -- suite --------------------------------------------------------------------


def encode_suite(s: Suite) -> bytes:
    root = ET.Element("study")
    _opt(root, "id", s.id)
    _sub(root, "alias", s.alias)
    _sub(root, "name", s.name)
    tasks = _sub(root, "tasks")
    for t in s.task_ids:
        _sub(tasks, "task_id", t)
    return _tostring(root)


def decode_suite(data: bytes | str) -> Suite:
    root = _parse(data, "study")
    return Suite(
        id=_text(root, "id", int, None),
        alias=_text(root, "alias"),
        name=_text(root, "name", str, ""),
        task_ids=tuple(_int(el.text) for el in _items(root, "tasks", "task_id")),
    )


# -- evaluations, listings, errors -------------------------------------------


def encode_evaluations(records: Iterable[EvaluationRecord]) -> bytes:
    root = ET.Element("evaluations")
    for rec in records:
        el = _sub(root, "evaluation")
        _sub(el, "run_id", rec.run_id)
        _sub(el, "task_id", rec.task_id)
        _sub(el, "flow_id", rec.flow_id)
        _sub(el, "function", rec.function)
        _sub(el, "value", float(rec.value))
        params = _sub(el, "parameters")
        for name in sorted(rec.parameters):
            pe = _sub(params, "parameter")
            _sub(pe, "full_name", name)
            _sub(pe, "value", rec.parameters[name])
    return _tostring(root)


def decode_evaluations(data: bytes | str) -> list[EvaluationRecord]:
    root = _parse(data, "evaluations")
    return [
        EvaluationRecord(
            run_id=_text(el, "run_id", int),
            task_id=_text(el, "task_id", int),
            flow_id=_text(el, "flow_id", int),
            function=_text(el, "function"),
            value=_text(el, "value", float),
            parameters={
                _text(p, "full_name"): _text(p, "value", str, "")
                for p in _items(el, "parameters", "parameter")
            },
        )
        for el in root.findall("evaluation")
    ]


def encode_listing(kind: str, summaries: Iterable[dict[str, Any]]) -> bytes:
    root = ET.Element("listing", kind=kind)
    for summary in summaries:
        item = _sub(root, "item")
        for key, value in summary.items():
            _sub(item, key, value)
    return _tostring(root)


def _scalar(text: str) -> Any:
    try:
        return int(text)
    except ValueError:
        return text


def decode_listing(data: bytes | str) -> list[dict[str, Any]]:
    root = _parse(data, "listing")
    return [{child.tag: _scalar(child.text or "") for child in item} for item in root.findall("item")]


def encode_upload_ack(kind: str, new_id: int) -> bytes:
    root = ET.Element("upload", kind=kind)
    _sub(root, "id", new_id)
    return _tostring(root)


def decode_upload_ack(data: bytes | str) -> int:
    return _text(_parse(data, "upload"), "id", int)


def encode_error(code: int, message: str) -> bytes:
    root = ET.Element("error")
    _sub(root, "code", code)
    _sub(root, "message", message)
    return _tostring(root)


ENCODERS: dict[type, Callable[[Any], bytes]] = {
    DatasetDescription: encode_dataset,
    Task: encode_task,
    Flow: encode_flow,
    Run: encode_run,
    Suite: encode_suite,
}

DECODERS: dict[str, Callable[[bytes | str], Any]] = {
    "dataset": decode_dataset,
    "task": decode_task,
    "flow": decode_flow,
    "run": decode_run,
    "suite": decode_suite,
}


def encode(entity: Any) -> bytes:
    try:
        return ENCODERS[type(entity)](entity)
    except KeyError:
        raise TypeError(f"no wire encoding for {type(entity).__name__}") from None


def decode(kind: str, data: bytes | str) -> Any:
    return DECODERS[kind](data)
