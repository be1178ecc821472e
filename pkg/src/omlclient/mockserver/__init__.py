"""Hermetic in-process HTTP server speaking the platform protocol over fixtures.

The fixture directory mirrors the cache layout below the host component::

    dataset/<id>/description.xml   dataset/<id>/payload.arff
    task/<id>/description.xml      task/<id>/splits.arff
    flow/<id>/description.xml      study/<alias>/description.xml
    evaluations.xml                errors.tsv

Uploads are validated, kept in memory and numbered from 10000 per entity kind.
"""

from __future__ import annotations

import csv
import email.parser
import email.policy
import math
import threading
import urllib.parse
from collections import Counter
from dataclasses import dataclass, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from .. import arff, codec, predictions
from ..cache import md5_hex
from ..entities import (
    DatasetDescription,
    EvaluationRecord,
    Feature,
    Flow,
    Run,
    Suite,
    Task,
    canonical_flow_name,
    check_task_against_dataset,
    validate,
)
from ..protocol import describe_features
from ..runner import SplitIntegrityError, iter_splits, make_splits

FIRST_UPLOAD_ID = 10000
BASE_PATH = "/api/v1/xml"
KNOWN_FUNCTIONS = {"predictive_accuracy"}
ACCURACY_TOLERANCE = 1e-9


def default_fixtures() -> Path:
    return Path(str(resources.files(__package__) / "fixtures"))


class FixtureError(ValueError):
    pass


class _Reject(Exception):
    def __init__(self, error: str, detail: str = ""):
        super().__init__(error, detail)
        self.error = error
        self.detail = detail


@dataclass(frozen=True)
class ErrorSpec:
    code: int
    http_status: int
    message: str


def load_errors(path: Path) -> dict[str, ErrorSpec]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.DictReader(fh, delimiter="\t")
        return {r["name"]: ErrorSpec(int(r["code"]), int(r["http_status"]), r["message"]) for r in rows}


class State:
    """Fixture corpus plus everything uploaded since start."""

    def __init__(self, fixtures: Path):
        self.lock = threading.Lock()
        self.errors = load_errors(fixtures / "errors.tsv")
        self.datasets: dict[int, tuple[DatasetDescription, bytes]] = {}
        self.tasks: dict[int, tuple[Task, bytes]] = {}
        self.flows: dict[int, Flow] = {}
        self.flow_index: dict[tuple[str, str], int] = {}
        self.runs: dict[int, tuple[Run, bytes]] = {}
        self.suites: dict[str, Suite] = {}
        self.evaluations: list[EvaluationRecord] = []
        self.next_id: Counter = Counter()
        self._load(fixtures)
        self._check_consistency()

    # -- loading ----------------------------------------------------------

    def _load(self, root: Path) -> None:
        for d in sorted((root / "dataset").glob("*")):
            desc = codec.decode_dataset((d / "description.xml").read_bytes())
            self.datasets[desc.id] = (desc, (d / "payload.arff").read_bytes())
        for d in sorted((root / "task").glob("*")):
            task = codec.decode_task((d / "description.xml").read_bytes())
            self.tasks[task.id] = (task, (d / "splits.arff").read_bytes())
        for d in sorted((root / "flow").glob("*")):
            flow = codec.decode_flow((d / "description.xml").read_bytes())
            self._register_flow(flow)
        for d in sorted((root / "study").glob("*")):
            suite = codec.decode_suite((d / "description.xml").read_bytes())
            self.suites[suite.alias] = suite
        evals = root / "evaluations.xml"
        if evals.exists():
            self.evaluations = codec.decode_evaluations(evals.read_bytes())

    def _register_flow(self, flow: Flow) -> None:
        for _, child in flow.components:
            self._register_flow(child)
        self.flows[flow.id] = flow
        self.flow_index[(canonical_flow_name(flow), flow.external_version)] = flow.id

    def _check_consistency(self) -> None:
        problems = []
        for kind, items in (("dataset", self.datasets), ("task", self.tasks), ("flow", self.flows)):
            for key in items:
                if key >= FIRST_UPLOAD_ID:
                    problems.append(f"fixture {kind} id {key} collides with the upload id range")
        for desc, payload in self.datasets.values():
            problems += [f"dataset {desc.id}: {p}" for p in validate(desc)]
            if md5_hex(payload) != desc.file_checksum:
                problems.append(f"dataset {desc.id}: payload checksum mismatch")
        for task, _ in self.tasks.values():
            problems += [f"task {task.id}: {p}" for p in validate(task)]
            if task.dataset_id not in self.datasets:
                problems.append(f"task {task.id} references missing dataset {task.dataset_id}")
            else:
                problems += check_task_against_dataset(task, self.datasets[task.dataset_id][0])
        for suite in self.suites.values():
            problems += [f"suite {suite.alias}: {p}" for p in validate(suite)]
            problems += [f"suite {suite.alias} references missing task {t}" for t in suite.task_ids if t not in self.tasks]
        for rec in self.evaluations:
            if rec.flow_id not in self.flows:
                problems.append(f"evaluation of run {rec.run_id} references missing flow {rec.flow_id}")
            if rec.task_id not in self.tasks:
                problems.append(f"evaluation of run {rec.run_id} references missing task {rec.task_id}")
        if problems:
            raise FixtureError("inconsistent fixtures:\n" + "\n".join(problems))

    def new_id(self, kind: str) -> int:
        self.next_id[kind] += 1
        return FIRST_UPLOAD_ID + self.next_id[kind] - 1


# -- request handling ---------------------------------------------------------


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise _Reject("bad_request", f"not an integer: {text!r}") from None


def _summaries(state: State, kind: str) -> list[dict[str, Any]]:
    if kind == "data":
        return [{"id": d.id, "name": d.name, "version": d.version} for d, _ in state.datasets.values()]
    if kind == "task":
        return [
            {"id": t.id, "task_type": t.task_type, "dataset_id": t.dataset_id, "target_name": t.target_name}
            for t, _ in state.tasks.values()
        ]
    if kind == "flow":
        return [{"id": f.id, "name": f.name, "external_version": f.external_version} for f in state.flows.values()]
    if kind == "run":
        return [{"id": r.id, "task_id": r.task_id, "flow_id": r.flow_id} for r, _ in state.runs.values()]
    if kind == "study":
        return [{"id": s.id, "alias": s.alias, "name": s.name} for s in state.suites.values()]
    raise _Reject("unknown_route", kind)


def _pairs(segments: list[str]) -> dict[str, str]:
    if len(segments) % 2:
        raise _Reject("bad_request", "filters must come in name/value pairs")
    return {segments[i]: segments[i + 1] for i in range(0, len(segments), 2)}


def _matches(summary: dict[str, Any], key: str, value: str) -> bool:
    wanted = set(value.split(","))
    for k in (key, f"{key}_id"):
        if k in summary:
            return str(summary[k]) in wanted
    return False


class _Handler(BaseHTTPRequestHandler):
    server: "_Server"

    def log_message(self, format: str, *args: Any) -> None:  # noqa: A002
        pass

    # plumbing

    def _route(self) -> tuple[str, dict[str, list[str]]]:
        parsed = urllib.parse.urlsplit(self.path)
        path = parsed.path
        if not path.startswith(BASE_PATH + "/"):
            raise _Reject("unknown_route", path)
        return path[len(BASE_PATH) + 1 :], urllib.parse.parse_qs(parsed.query)

    def _send(self, status: int, body: bytes, content_type: str = "application/xml") -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, name: str, detail: str = "") -> None:
        spec = self.server.state.errors[name]
        message = f"{spec.message}: {detail}" if detail else spec.message
        self._send(spec.http_status, codec.encode_error(spec.code, message))

    def _dispatch(self, method: str) -> None:
        mock = self.server.mock
        # drain the body first so early rejections never reset the connection
        self._body = self.rfile.read(int(self.headers.get("Content-Length", "0") or 0))
        try:
            route, query = self._route()
            mock._count(route)
            injected = mock._take_failure()
            if injected:
                self._send(injected, b"<html>temporarily unavailable</html>", "text/html")
                return
            handler = self._get if method == "GET" else self._post
            status, body, ctype = handler(route, query)
            self._send(status, body, ctype)
        except _Reject as rej:
            self._error(rej.error, rej.detail)

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")

    # reads

    def _get(self, route: str, query: dict) -> tuple[int, bytes, str]:
        state = self.server.state
        base = self.server.mock.base_url
        parts = [urllib.parse.unquote(p) for p in route.split("/")]
        xml = "application/xml"
        with state.lock:
            if parts[0] == "files" and len(parts) == 4:
                return 200, self._file(parts[1], parts[2], parts[3]), "text/plain"
            if len(parts) >= 2 and parts[1] == "list":
                return 200, self._listing(parts[0], parts[2:]), xml
            if len(parts) != 2:
                raise _Reject("unknown_route", route)
            kind, key = parts
            if kind == "data":
                entry = state.datasets.get(_int(key))
                if entry is None:
                    raise _Reject("unknown_dataset", key)
                desc = replace(entry[0], url=f"{base}/files/dataset/{entry[0].id}/payload.arff")
                return 200, codec.encode_dataset(desc), xml
            if kind == "task":
                entry = state.tasks.get(_int(key))
                if entry is None:
                    raise _Reject("unknown_task", key)
                task = entry[0]
                ep = replace(task.estimation_procedure, splits_ref=f"{base}/files/task/{task.id}/splits.arff")
                return 200, codec.encode_task(replace(task, estimation_procedure=ep)), xml
            if kind == "flow":
                flow = state.flows.get(_int(key))
                if flow is None:
                    raise _Reject("unknown_flow", key)
                return 200, codec.encode_flow(flow), xml
            if kind == "run":
                entry = state.runs.get(_int(key))
                if entry is None:
                    raise _Reject("unknown_run", key)
                run, blob = entry
                run = replace(
                    run,
                    predictions_url=f"{base}/files/run/{run.id}/predictions.arff",
                    predictions_checksum=md5_hex(blob),
                )
                return 200, codec.encode_run(run), xml
            if kind == "study":
                suite = state.suites.get(key)
                if suite is None and key.isdigit():
                    suite = next((s for s in state.suites.values() if s.id == int(key)), None)
                if suite is None:
                    raise _Reject("unknown_study", key)
                return 200, codec.encode_suite(suite), xml
        raise _Reject("unknown_route", route)

    def _file(self, kind: str, key: str, name: str) -> bytes:
        state = self.server.state
        if kind == "dataset" and name == "payload.arff" and key.isdigit() and int(key) in state.datasets:
            return state.datasets[int(key)][1]
        if kind == "task" and name == "splits.arff" and key.isdigit() and int(key) in state.tasks:
            return state.tasks[int(key)][1]
        if kind == "run" and name == "predictions.arff" and key.isdigit() and int(key) in state.runs:
            return state.runs[int(key)][1]
        raise _Reject("unknown_route", f"files/{kind}/{key}/{name}")

    def _listing(self, kind: str, segments: list[str]) -> bytes:
        state = self.server.state
        if kind == "evaluation":
            return self._evaluations(_pairs(segments))
        filters = _pairs(segments)
        limit = _int(filters.pop("limit", "10000"))
        offset = _int(filters.pop("offset", "0"))
        items = sorted(_summaries(state, kind), key=lambda s: (s["id"] is None, s["id"] or 0))
        items = [s for s in items if all(_matches(s, k, v) for k, v in filters.items())]
        return codec.encode_listing(kind, items[offset : offset + limit])

    def _evaluations(self, filters: dict[str, str]) -> bytes:
        state = self.server.state
        function = filters.pop("function", "")
        known = KNOWN_FUNCTIONS | {r.function for r in state.evaluations}
        if function not in known:
            raise _Reject("unknown_function", function)
        flows = {int(v) for v in filters.pop("flow", "").split(",") if v}
        tasks = {int(v) for v in filters.pop("task", "").split(",") if v}
        if filters:
            raise _Reject("bad_request", f"unsupported evaluation filters {sorted(filters)}")
        records = [
            r
            for r in state.evaluations
            if r.function == function and (not flows or r.flow_id in flows) and (not tasks or r.task_id in tasks)
        ]
        return codec.encode_evaluations(sorted(records, key=lambda r: r.run_id))

    # writes

    def _post(self, route: str, query: dict) -> tuple[int, bytes, str]:
        if not query.get("api_key", [""])[0]:
            raise _Reject("auth_required")
        files = self._multipart()
        if "description" not in files:
            raise _Reject("bad_request", "missing description part")
        state = self.server.state
        handlers: dict[str, Callable[[dict[str, bytes]], int]] = {
            "data": self._upload_dataset,
            "task": self._upload_task,
            "flow": self._upload_flow,
            "run": self._upload_run,
        }
        if route not in handlers:
            raise _Reject("unknown_route", route)
        with state.lock:
            try:
                new_id = handlers[route](files)
            except codec.DecodeError as exc:
                raise _Reject("invalid_upload", str(exc)) from None
        kind = {"data": "dataset"}.get(route, route)
        return 200, codec.encode_upload_ack(kind, new_id), "application/xml"

    def _multipart(self) -> dict[str, bytes]:
        body = self._body
        ctype = self.headers.get("Content-Type", "")
        if not ctype.startswith("multipart/form-data"):
            raise _Reject("bad_request", "expected multipart/form-data")
        msg = email.parser.BytesParser(policy=email.policy.HTTP).parsebytes(
            f"Content-Type: {ctype}\r\n\r\n".encode() + body
        )
        return {part.get_param("name", header="content-disposition"): part.get_payload(decode=True) for part in msg.iter_parts()}

    def _upload_dataset(self, files: dict[str, bytes]) -> int:
        state = self.server.state
        desc = codec.decode_dataset(files["description"])
        payload = files.get("dataset")
        if payload is None:
            raise _Reject("invalid_upload", "missing dataset part")
        problems = validate(replace(desc, id=None))
        if desc.id is not None:
            problems.append("drafts must not carry an id")
        if md5_hex(payload) != desc.file_checksum:
            problems.append("file_checksum does not match the payload")
        try:
            doc = arff.parse(payload)
        except (arff.ParseError, UnicodeDecodeError) as exc:
            raise _Reject("invalid_upload", f"payload is not valid ARFF: {exc}") from None
        if describe_features(doc) != desc.features:
            problems.append("features do not match the payload")
        if problems:
            raise _Reject("invalid_upload", "; ".join(problems))
        new_id = state.new_id("dataset")
        state.datasets[new_id] = (replace(desc, id=new_id), payload)
        return new_id

    def _upload_task(self, files: dict[str, bytes]) -> int:
        state = self.server.state
        task = codec.decode_task(files["description"])
        problems = validate(task)
        entry = state.datasets.get(task.dataset_id)
        if entry is None:
            raise _Reject("unknown_dataset", str(task.dataset_id))
        desc, payload = entry
        problems += check_task_against_dataset(task, desc)
        if not problems and task.task_type == "supervised_classification":
            target = desc.feature(task.target_name)
            if target.kind != "nominal" or target.nominal_values != task.class_labels:
                problems.append("class_labels must equal the nominal values of the target")
        if problems:
            raise _Reject("invalid_upload", "; ".join(problems))
        new_id = state.new_id("task")
        ep = task.estimation_procedure
        n_rows = len(arff.parse(payload).rows)
        splits = make_splits(n_rows, ep.kind, ep.folds or 1, ep.repeats, ep.percentage, seed=new_id)
        state.tasks[new_id] = (replace(task, id=new_id), arff.serialize(splits).encode())
        return new_id

    def _upload_flow(self, files: dict[str, bytes]) -> int:
        flow = codec.decode_flow(files["description"])
        problems = validate(flow)
        if problems:
            raise _Reject("invalid_upload", "; ".join(problems))
        return self._store_flow(flow).id

    def _store_flow(self, flow: Flow) -> Flow:
        state = self.server.state
        components = tuple((role, self._store_flow(child)) for role, child in flow.components)
        key = (canonical_flow_name(flow), flow.external_version)
        if key in state.flow_index:
            return state.flows[state.flow_index[key]]
        stored = replace(flow, id=state.new_id("flow"), components=components)
        state.flows[stored.id] = stored
        state.flow_index[key] = stored.id
        return stored

    def _upload_run(self, files: dict[str, bytes]) -> int:
        state = self.server.state
        run = codec.decode_run(files["description"])
        blob = files.get("predictions")
        if blob is None:
            raise _Reject("invalid_upload", "missing predictions part")
        if run.task_id not in state.tasks:
            raise _Reject("unknown_task", str(run.task_id))
        if run.flow_id not in state.flows:
            raise _Reject("unknown_flow", str(run.flow_id))
        task, splits_blob = state.tasks[run.task_id]
        flow = state.flows[run.flow_id]
        try:
            doc = arff.parse(blob)
            rows = predictions.rows_from_document(doc)
        except (arff.ParseError, ValueError, UnicodeDecodeError) as exc:
            raise _Reject("run_rejected", f"unreadable predictions: {exc}") from None
        problems = validate(replace(run, predictions=tuple(rows), flow=flow))
        if predictions.class_labels_of(doc) != task.class_labels:
            problems.append("prediction labels differ from the task's class labels")
        problems += self._check_predictions(task, splits_blob, rows)
        if rows:
            accuracy = sum(r.prediction == r.truth for r in rows) / len(rows)
            claimed = run.local_evaluations.get("predictive_accuracy")
            if claimed is not None and abs(claimed - accuracy) > ACCURACY_TOLERANCE:
                problems.append(f"reported predictive_accuracy {claimed} differs from recomputed {accuracy}")
        else:
            problems.append("no predictions")
        if problems:
            raise _Reject("run_rejected", "; ".join(problems))
        new_id = state.new_id("run")
        state.runs[new_id] = (replace(run, id=new_id, predictions_url=None, predictions_checksum=None), blob)
        state.evaluations.append(
            EvaluationRecord(
                new_id, run.task_id, run.flow_id, "predictive_accuracy", accuracy, self._full_names(flow, run.setup)
            )
        )
        return new_id

    def _check_predictions(self, task: Task, splits_blob: bytes, rows: list) -> list[str]:
        state = self.server.state
        desc, payload = state.datasets[task.dataset_id]
        table = arff.coerce_table(arff.parse(payload))
        truth = table[task.target_name].labels()
        problems = []
        try:
            splits = iter_splits(task, arff.parse(splits_blob), n_rows=table.row_count)
        except SplitIntegrityError as exc:
            return [f"task splits unusable: {exc}"]
        expected = {(s.repeat, s.fold, r) for s in splits for r in s.test}
        got = {(r.repeat, r.fold, r.row_id) for r in rows}
        if got != expected:
            problems.append("predictions do not cover exactly the test rows of every fold")
        for r in rows:
            if 0 <= r.row_id < len(truth) and r.truth != truth[r.row_id]:
                problems.append(f"row {r.row_id}: 'correct' column disagrees with the dataset")
                break
        bad = [r.row_id for r in rows if r.confidences and not _confidences_ok(r.confidences)]
        if bad:
            problems.append(f"confidences do not form a distribution at rows {bad[:5]}")
        return problems

    @staticmethod
    def _full_names(flow: Flow, setup) -> dict[str, str]:
        out = {}
        for path, value in setup:
            owner, param = flow.resolve(path)
            out[f"{canonical_flow_name(owner)}({owner.id})_{param.name}"] = value
        return out


def _confidences_ok(conf) -> bool:
    return all(0.0 <= c <= 1.0 for c in conf) and abs(math.fsum(conf) - 1.0) <= 1e-6


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    state: State
    mock: "MockServer"


class MockServer:
    """Running server handle: ``base_url``, request ``counts`` and ``shutdown()``."""

    def __init__(self, fixtures: Path | str | None = None, host: str = "127.0.0.1", port: int = 0):
        self.state = State(Path(fixtures) if fixtures else default_fixtures())
        self._httpd = _Server((host, port), _Handler)
        self._httpd.state = self.state
        self._httpd.mock = self
        self._counts: Counter = Counter()
        self._count_lock = threading.Lock()
        self._failures: list[int] = []
        bound_host, bound_port = self._httpd.server_address[:2]
        self.base_url = f"http://{bound_host}:{bound_port}{BASE_PATH}"
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, kwargs={"poll_interval": 0.02}, name="mockserver", daemon=True
        )
        self._thread.start()

    def _count(self, route: str) -> None:
        with self._count_lock:
            self._counts[route] += 1

    def _take_failure(self) -> int | None:
        with self._count_lock:
            return self._failures.pop(0) if self._failures else None

    def fail_next(self, n: int = 1, status: int = 503) -> None:
        """Answer the next ``n`` requests with ``status`` (to exercise retries)."""
        with self._count_lock:
            self._failures += [status] * n

    @property
    def counts(self) -> Counter:
        with self._count_lock:
            return Counter(self._counts)

    @property
    def total_requests(self) -> int:
        with self._count_lock:
            return sum(self._counts.values())

    def reset_counts(self) -> None:
        with self._count_lock:
            self._counts.clear()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "MockServer":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.shutdown()


def serve(fixtures: Path | str | None = None) -> MockServer:
    return MockServer(fixtures)
