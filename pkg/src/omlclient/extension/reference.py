"""Built-in reference learner family (flavor ``ref``, flow namespace ``ref.``).

Node kinds:

=============  ===========  =======================================
kind           parameters   behaviour
=============  ===========  =======================================
majority       -            most frequent training class
stump          max_depth    threshold tree grown by training accuracy
nn             -            1-nearest neighbour, seeded tie-breaking
impute.mean    -            numeric missing cells -> training mean
onehot         -            nominal columns -> indicator columns
pipeline       -            transformers then one final learner
gridsearch     grid         picks a setting by inner 2-fold CV
=============  ===========  =======================================

A grid is written ``path=v1|v2|...;path2=...`` where each path is a dotted
parameter path relative to the searched model, e.g. ``max_depth=1|2|3``.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

import numpy as np

from ..arff import DataTable
from ..entities import Flow, FlowParameter, TraceRow
from . import (
    DegenerateFoldError,
    FoldPrediction,
    InvalidModelError,
    InvalidParameterError,
    ModelSpec,
    UnknownFlowError,
    register_extension,
)
from .learners import (
    DesignEncoder,
    MajorityModel,
    MeanImputer,
    NearestNeighborModel,
    OneHotEncoder,
    TreeModel,
    label_indices,
)

FLAVOR = "ref"
PREFIX = "ref."
VERSION = "omlclient.ref==1.0"
DEPENDENCIES = "numpy"


@dataclass(frozen=True)
class _Kind:
    params: tuple[tuple[str, str, str], ...] = ()  # (name, default, type)
    role: str | None = None  # role inside a pipeline
    learner: bool = True


KINDS: dict[str, _Kind] = {
    "majority": _Kind(),
    "stump": _Kind(params=(("max_depth", "1", "int"),)),
    "nn": _Kind(),
    "impute.mean": _Kind(role="imputer", learner=False),
    "onehot": _Kind(role="encoder", learner=False),
    "pipeline": _Kind(),
    "gridsearch": _Kind(params=(("grid", "", "grid"),)),
}


# -- construction -------------------------------------------------------------


def node(kind: str, children: Sequence[ModelSpec] = (), **params: Any) -> ModelSpec:
    if kind not in KINDS:
        raise InvalidModelError(f"unknown reference node kind {kind!r}")
    declared = KINDS[kind].params
    unknown = set(params) - {name for name, _, _ in declared}
    if unknown:
        raise InvalidParameterError(f"{kind} has no parameter(s) {sorted(unknown)}")
    values = tuple((name, _format_value(params.get(name, default))) for name, default, _ in declared)
    for (name, value), (_, _, ptype) in zip(values, declared):
        _check_value(kind, name, value, ptype)
    spec = ModelSpec(FLAVOR, kind, values, tuple(children))
    _check_structure(spec)
    return spec


def _format_value(value: Any) -> str:
    if isinstance(value, Mapping):
        return format_grid(value)
    return str(value)


def majority() -> ModelSpec:
    return node("majority")


def stump(max_depth: int = 1) -> ModelSpec:
    return node("stump", max_depth=max_depth)


def nearest_neighbor() -> ModelSpec:
    return node("nn")


def impute_mean() -> ModelSpec:
    return node("impute.mean")


def onehot() -> ModelSpec:
    return node("onehot")


def pipeline(*steps: ModelSpec) -> ModelSpec:
    return node("pipeline", steps)


def grid_search(inner: ModelSpec, grid: Mapping[str, Sequence[Any]] | str) -> ModelSpec:
    return node("gridsearch", (inner,), grid=grid)


def _check_structure(spec: ModelSpec) -> None:
    if spec.kind == "pipeline":
        if not spec.children:
            raise InvalidModelError("pipeline needs at least one step")
        *transformers, last = spec.children
        if any(KINDS[t.kind].learner for t in transformers):
            raise InvalidModelError("only the last pipeline step may be a learner")
        if not KINDS[last.kind].learner:
            raise InvalidModelError("the last pipeline step must be a learner")
    elif spec.kind == "gridsearch":
        if len(spec.children) != 1 or not KINDS[spec.children[0].kind].learner:
            raise InvalidModelError("gridsearch wraps exactly one learner")
    elif spec.children:
        raise InvalidModelError(f"{spec.kind} takes no sub-models")


# -- parameter values ---------------------------------------------------------


def parse_grid(text: str) -> list[tuple[str, list[str]]]:
    grid = []
    for part in filter(None, text.split(";")):
        path, sep, values = part.partition("=")
        if not sep or not path or not values:
            raise InvalidParameterError(f"malformed grid entry {part!r}")
        grid.append((path.strip(), [v.strip() for v in values.split("|")]))
    return grid


def format_grid(grid: Mapping[str, Sequence[Any]]) -> str:
    return ";".join(f"{path}={'|'.join(str(v) for v in values)}" for path, values in grid.items())


def _check_value(kind: str, name: str, value: str, ptype: str) -> None:
    if ptype == "int":
        try:
            ok = int(value) >= 1
        except ValueError:
            ok = False
        if not ok:
            raise InvalidParameterError(f"{kind}.{name} must be a positive integer, got {value!r}")
    elif ptype == "grid":
        parse_grid(value)


def with_param(spec: ModelSpec, path: str, value: str) -> ModelSpec:
    """Copy of ``spec`` with the parameter at dotted ``path`` set to ``value``."""
    head, _, rest = path.partition(".")
    if not rest:
        if head not in dict(spec.params):
            raise InvalidParameterError(f"{spec.kind} has no parameter {head!r}")
        return node(spec.kind, spec.children, **{**dict(spec.params), head: value})
    roles = _roles(spec)
    if head not in roles:
        raise InvalidParameterError(f"{spec.kind} has no component {head!r}")
    i = roles.index(head)
    children = list(spec.children)
    children[i] = with_param(children[i], rest, value)
    return replace(spec, children=tuple(children))


# -- model <-> flow -----------------------------------------------------------


def _roles(spec: ModelSpec) -> list[str]:
    if spec.kind == "gridsearch":
        return ["inner"]
    roles: list[str] = []
    for i, child in enumerate(spec.children):
        if i == len(spec.children) - 1:
            base = "learner"
        else:
            base = KINDS[child.kind].role or f"step{i}"
        role, n = base, 2
        while role in roles:
            role, n = f"{base}{n}", n + 1
        roles.append(role)
    return roles


class ReferenceExtension:
    flavor = FLAVOR
    prefix = PREFIX
    version = VERSION

    def model_to_flow(self, model: ModelSpec) -> Flow:
        if model.flavor != FLAVOR:
            raise InvalidModelError(f"not a reference model: flavor {model.flavor!r}")
        declared = {name: ptype for name, _, ptype in KINDS[model.kind].params}
        return Flow(
            name=PREFIX + model.kind,
            external_version=VERSION,
            parameters=tuple(FlowParameter(name, value, declared[name]) for name, value in model.params),
            components=tuple(
                (role, self.model_to_flow(child)) for role, child in zip(_roles(model), model.children)
            ),
            dependencies=DEPENDENCIES,
        )

    def flow_to_model(self, flow: Flow, setup: Mapping[str, str] | Sequence[tuple[str, str]] | None = None) -> ModelSpec:
        overrides = dict(setup.items() if isinstance(setup, Mapping) else (setup or ()))
        spec = self._build(flow, "", overrides)
        known = {f"{prefix}{p.name}" for prefix, f in flow.walk() for p in f.parameters}
        stray = set(overrides) - known
        if stray:
            raise InvalidParameterError(f"setup paths not in flow: {sorted(stray)}")
        return spec

    def _build(self, flow: Flow, prefix: str, overrides: Mapping[str, str]) -> ModelSpec:
        if not flow.name.startswith(PREFIX) or flow.name[len(PREFIX) :] not in KINDS:
            raise UnknownFlowError(f"flow {flow.name!r} is not a reference flow")
        kind = flow.name[len(PREFIX) :]
        declared = {name for name, _, _ in KINDS[kind].params}
        params = {}
        for p in flow.parameters:
            if p.name not in declared:
                raise InvalidParameterError(f"{flow.name} has no parameter {p.name!r}")
            params[p.name] = overrides.get(prefix + p.name, p.default_value)
        children = [self._build(child, f"{prefix}{role}.", overrides) for role, child in flow.components]
        spec = node(kind, children, **params)
        if [role for role, _ in flow.components] != _roles(spec):
            raise UnknownFlowError(f"component roles of {flow.name} do not match the reference layout")
        return spec

    def fit_predict_fold(
        self,
        model: ModelSpec,
        table: DataTable,
        target: str,
        class_labels: Sequence[str],
        train_idx: Sequence[int],
        test_idx: Sequence[int],
        seed: int,
    ) -> tuple[list[FoldPrediction], list[TraceRow] | None]:
        train = np.asarray(train_idx, dtype=np.int64)
        test = np.asarray(test_idx, dtype=np.int64)
        if len(np.intersect1d(train, test)):
            raise ValueError("train and test indices overlap")
        for idx in (train, test):
            if len(idx) and (idx.min() < 0 or idx.max() >= table.row_count):
                raise IndexError("row index out of range")
        labels = tuple(class_labels)
        y = label_indices(table, target, labels)
        fitted = fit(model, table, target, labels, y, train, seed)
        results = fitted.predict(table, test)
        preds = [FoldPrediction(int(r), labels[k], conf) for r, (k, conf) in zip(test, results)]
        return preds, fitted.trace


register_extension(ReferenceExtension())


# -- training -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Trained state for one fold, with the spec and seed it came from."""

    spec: ModelSpec
    seed: int
    transformers: tuple[Any, ...]
    encoder: DesignEncoder | None
    learner: Any
    trace: list[TraceRow] | None = None

    def predict(self, table: DataTable, rows: np.ndarray) -> list[tuple[int, tuple[float, ...]]]:
        for t in self.transformers:
            table = t.transform(table)
        if isinstance(self.learner, FittedModel):
            return self.learner.predict(table, rows)
        X = self.encoder.matrix(table, rows)
        return self.learner.predict(X, rows)


def fit(spec: ModelSpec, table: DataTable, target: str, labels: Sequence[str], y: np.ndarray, train: np.ndarray, seed: int) -> FittedModel:
    train = train[y[train] >= 0]
    if len(train) == 0:
        raise DegenerateFoldError("no labelled rows in the training fold")
    n_classes = len(labels)
    if spec.kind == "pipeline":
        transformers = []
        for step in spec.children[:-1]:
            t = (MeanImputer if step.kind == "impute.mean" else OneHotEncoder).fit(table, target, train)
            table = t.transform(table)
            transformers.append(t)
        inner = fit(spec.children[-1], table, target, labels, y, train, seed)
        return FittedModel(spec, seed, tuple(transformers), None, inner, inner.trace)
    if spec.kind == "gridsearch":
        return _fit_grid(spec, table, target, labels, y, train, seed)
    if not KINDS[spec.kind].learner:
        raise InvalidModelError(f"{spec.kind} is a transformer, not a learner")
    encoder = DesignEncoder.fit(table, target, train)
    X = encoder.matrix(table, train)
    if spec.kind == "majority":
        learner = MajorityModel.fit(X, y[train], n_classes)
    elif spec.kind == "stump":
        learner = TreeModel.fit(X, y[train], n_classes, int(spec.param("max_depth")))
    else:
        learner = NearestNeighborModel.fit(X, y[train], n_classes, seed)
    return FittedModel(spec, seed, (), encoder, learner)


def inner_splits(train: Sequence[int], seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Two-fold split of the training rows used by grid search.

    Rows are shuffled with ``Random(seed)`` and dealt alternately.
    """
    rows = sorted(int(r) for r in train)
    if len(rows) < 2:
        raise DegenerateFoldError("grid search needs at least two training rows")
    random.Random(seed).shuffle(rows)
    halves = [np.array(sorted(rows[0::2]), dtype=np.int64), np.array(sorted(rows[1::2]), dtype=np.int64)]
    return [(halves[0], halves[1]), (halves[1], halves[0])]


def grid_points(spec: ModelSpec) -> list[list[tuple[str, str]]]:
    grid = parse_grid(spec.param("grid"))
    return [list(zip([p for p, _ in grid], combo)) for combo in itertools.product(*(v for _, v in grid))]


def _fit_grid(spec: ModelSpec, table: DataTable, target: str, labels, y: np.ndarray, train: np.ndarray, seed: int) -> FittedModel:
    inner = spec.children[0]
    points = grid_points(spec)
    splits = inner_splits(train, seed)
    scores = []
    candidates = []
    for point in points:
        candidate = inner
        for path, value in point:
            candidate = with_param(candidate, path, value)
        candidates.append(candidate)
        correct = 0
        for fit_rows, eval_rows in splits:
            try:
                model = fit(candidate, table, target, labels, y, fit_rows, seed)
            except DegenerateFoldError:
                # a one-class inner half: the only sensible guess is that class
                only = np.unique(y[fit_rows])
                if len(only) != 1:
                    raise
                correct += int(np.sum(y[eval_rows] == only[0]))
                continue
            for (k, _), r in zip(model.predict(table, eval_rows), eval_rows):
                correct += int(k == y[r])
        scores.append(correct / len(train))
    best = max(range(len(points)), key=lambda i: (scores[i], -i))
    trace = [
        TraceRow(0, 0, i, ";".join(f"{p}={v}" for p, v in point), scores[i], i == best)
        for i, point in enumerate(points)
    ]
    final = fit(candidates[best], table, target, labels, y, train, seed)
    return FittedModel(spec, seed, (), None, final, trace)


# -- compact model strings ----------------------------------------------------


def _normalise(name: str) -> str:
    name = name.strip()
    return name[len(PREFIX) :] if name.startswith(PREFIX) else name


def parse_spec(text: str) -> ModelSpec:
    """Parse the command-line model grammar.

    ``name[,key=value...][:child,child...]`` where each child is either
    ``name[,key=value...]`` (a ``key=value`` token attaches to the child before
    it) or a parenthesised nested spec. The ``ref.`` prefix is optional.

    >>> parse_spec("ref.pipeline:impute.mean,onehot,stump").kind
    'pipeline'
    """
    spec, pos = _parse_node(text, 0)
    if pos != len(text):
        raise InvalidModelError(f"unexpected {text[pos:]!r} in model spec")
    return spec


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise InvalidModelError("unbalanced parentheses in model spec")
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth:
        raise InvalidModelError("unbalanced parentheses in model spec")
    parts.append("".join(cur))
    return parts


def _parse_node(text: str, pos: int) -> tuple[ModelSpec, int]:
    pieces = _split_top(text[pos:], ":")
    head = pieces[0]
    tail = ":".join(pieces[1:]) if len(pieces) > 1 else None
    tokens = [t.strip() for t in _split_top(head, ",")]
    name, params = tokens[0], _params(tokens[1:])
    children: list[ModelSpec] = []
    if tail is not None:
        for token in (t.strip() for t in _split_top(tail, ",")):
            if not token:
                raise InvalidModelError("empty token in model spec")
            if token.startswith("(") and token.endswith(")"):
                children.append(parse_spec(token[1:-1]))
            elif "=" in token:
                if not children:
                    raise InvalidModelError(f"parameter {token!r} has no preceding step")
                key, value = token.split("=", 1)
                children[-1] = with_param(children[-1], key.strip(), value.strip())
            else:
                children.append(node(_normalise(token)))
    if not name:
        raise InvalidModelError("empty model name")
    return node(_normalise(name), children, **params), len(text)


def _params(tokens: Sequence[str]) -> dict[str, str]:
    params = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep:
            raise InvalidModelError(f"expected key=value, got {token!r}")
        params[key.strip()] = value.strip()
    return params
