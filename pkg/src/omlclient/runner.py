"""Run a model on a task: splits, per-fold training, scoring and upload."""

from __future__ import annotations

import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

from . import arff, cache as cachemod, extension, protocol, transport
from .arff import ArffDocument, Attribute, DataTable
from .entities import PredictionRow, Run, Task, Trace, validate
from .extension import ModelSpec
from .predictions import canonical_order, predictions_document

logger = logging.getLogger(__name__)

DEFAULT_SEED = 1
SPLIT_ATTRIBUTES = ("type", "rowid", "repeat", "fold")


class SplitIntegrityError(ValueError):
    pass


class UnknownMetricError(ValueError):
    pass


class FoldError(RuntimeError):
    def __init__(self, repeat: int, fold: int, cause: Exception):
        super().__init__(f"repeat {repeat}, fold {fold} failed: {type(cause).__name__}: {cause}")
        self.repeat = repeat
        self.fold = fold


@dataclass(frozen=True)
class Split:
    repeat: int
    fold: int
    train: tuple[int, ...]
    test: tuple[int, ...]


def _folds_per_repeat(task: Task) -> int:
    ep = task.estimation_procedure
    return ep.folds if ep.kind == "crossvalidation" else 1


def iter_splits(task: Task, splits_doc: ArffDocument, n_rows: int | None = None) -> list[Split]:
    """Group a split table into ordered ``(repeat, fold)`` train/test index lists.

    Within each repeat the test folds of a cross-validation must partition the
    row ids: all rows of the dataset when ``n_rows`` is given, otherwise every
    row id the repeat mentions.
    """
    names = [a.name for a in splits_doc.attributes]
    missing = [a for a in SPLIT_ATTRIBUTES if a not in names]
    if missing:
        raise SplitIntegrityError(f"split table lacks attributes {missing}")
    ti, ri, pi, fi = (names.index(a) for a in SPLIT_ATTRIBUTES)
    groups: dict[tuple[int, int], dict[str, list[int]]] = {}
    for n, row in enumerate(splits_doc.rows):
        kind, rowid, rep, fold = row[ti], row[ri], row[pi], row[fi]
        if kind not in ("TRAIN", "TEST") or None in (rowid, rep, fold):
            raise SplitIntegrityError(f"split row {n} is incomplete or has an unknown type")
        groups.setdefault((int(rep), int(fold)), {"TRAIN": [], "TEST": []})[kind].append(int(rowid))

    ep = task.estimation_procedure
    n_folds = _folds_per_repeat(task)
    expected = {(r, f) for r in range(ep.repeats) for f in range(n_folds)}
    if set(groups) != expected:
        raise SplitIntegrityError(
            f"split table covers (repeat, fold) pairs {sorted(groups)}, expected {sorted(expected)}"
        )

    splits = []
    for rep in range(ep.repeats):
        mentioned = set()
        for f in range(n_folds):
            mentioned.update(groups[rep, f]["TRAIN"], groups[rep, f]["TEST"])
        universe = set(range(n_rows)) if n_rows is not None else mentioned
        if not mentioned <= universe:
            raise SplitIntegrityError(f"repeat {rep} references row ids outside the dataset")
        covered: set[int] = set()
        for f in range(n_folds):
            train, test = groups[rep, f]["TRAIN"], groups[rep, f]["TEST"]
            if len(set(train)) != len(train) or len(set(test)) != len(test):
                raise SplitIntegrityError(f"repeat {rep} fold {f} lists a row id twice")
            if set(train) & set(test):
                raise SplitIntegrityError(f"repeat {rep} fold {f} has rows in both train and test")
            if set(train) | set(test) != universe:
                raise SplitIntegrityError(f"repeat {rep} fold {f} does not account for every row")
            overlap = covered & set(test)
            if overlap:
                raise SplitIntegrityError(f"repeat {rep}: row ids {sorted(overlap)} appear in more than one test fold")
            covered |= set(test)
            splits.append(Split(rep, f, tuple(sorted(train)), tuple(sorted(test))))
        if ep.kind == "crossvalidation" and covered != universe:
            raise SplitIntegrityError(f"repeat {rep}: test folds miss row ids {sorted(universe - covered)}")
    return splits


def make_splits(
    n_rows: int,
    kind: str = "crossvalidation",
    folds: int = 10,
    repeats: int = 1,
    percentage: float | None = None,
    seed: int = 0,
) -> ArffDocument:
    """Generate a split table: rows are shuffled per repeat and dealt round-robin."""
    rows = []
    for rep in range(repeats):
        order = list(range(n_rows))
        random.Random(f"{seed}:{rep}").shuffle(order)
        if kind == "crossvalidation":
            assignment = {row: pos % folds for pos, row in enumerate(order)}
            n_folds = folds
        else:
            n_test = round(n_rows * percentage / 100)
            assignment = {row: (0 if pos < n_test else -1) for pos, row in enumerate(order)}
            n_folds = 1
        for f in range(n_folds):
            for r in range(n_rows):
                if assignment[r] != f:
                    rows.append(("TRAIN", float(r), float(rep), float(f)))
            for r in range(n_rows):
                if assignment[r] == f:
                    rows.append(("TEST", float(r), float(rep), float(f)))
    attrs = (
        Attribute("type", "nominal", ("TRAIN", "TEST")),
        Attribute("rowid", "numeric"),
        Attribute("repeat", "numeric"),
        Attribute("fold", "numeric"),
    )
    return ArffDocument("splits", attrs, tuple(rows))


def fold_seed(base_seed: int, repeat: int, fold: int, folds: int) -> int:
    return base_seed + repeat * folds + fold


def run_on_table(
    model: ModelSpec,
    task: Task,
    table: DataTable,
    splits: Sequence[Split],
    base_seed: int = DEFAULT_SEED,
    workers: int = 1,
) -> Run:
    """Execute every split locally and assemble the run (no network, no cache)."""
    if task.task_type != "supervised_classification":
        raise ValueError("only classification tasks are supported")
    ext = extension.get_extension(model.flavor)
    flow = ext.model_to_flow(model)
    folds = _folds_per_repeat(task)
    labels = task.class_labels

    def one(split: Split):
        seed = fold_seed(base_seed, split.repeat, split.fold, folds)
        try:
            return ext.fit_predict_fold(model, table, task.target_name, labels, split.train, split.test, seed)
        except Exception as exc:
            raise FoldError(split.repeat, split.fold, exc) from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, splits))
    else:
        results = [one(s) for s in splits]

    truth = table[task.target_name].labels()
    rows: list[PredictionRow] = []
    trace_rows = []
    for split, (preds, trace) in zip(splits, results):
        rows += [
            PredictionRow(split.repeat, split.fold, p.row_id, p.prediction, truth[p.row_id], p.confidences)
            for p in preds
        ]
        if trace is not None:
            trace_rows += [replace(t, repeat=split.repeat, fold=split.fold) for t in trace]
    rows = canonical_order(rows)
    run = Run(
        task_id=task.id,
        flow_id=flow.id,
        setup=tuple(extension.setup_of(model)),
        seed=base_seed,
        predictions=tuple(rows),
        trace=Trace(tuple(trace_rows)) if trace_rows else None,
        local_evaluations={"predictive_accuracy": score(rows, "predictive_accuracy")},
        flow=flow,
    )
    problems = validate(run)
    if problems:
        raise ValueError("assembled an invalid run: " + "; ".join(problems))
    return run


def fetch_splits(server: transport.ServerConfig, cache: cachemod.CacheConfig, task: Task) -> ArffDocument:
    ref = task.estimation_procedure.splits_ref or server.url(f"task/{task.id}/splits")
    data = cachemod.fetch_cached(
        cache, ("task", task.id, "splits"), None, lambda: transport.get(server, ref), host=server.host
    )
    return arff.parse(data)


def run_model_on_task(
    model: ModelSpec,
    task: Task,
    base_seed: int = DEFAULT_SEED,
    server: transport.ServerConfig | None = None,
    cache: cachemod.CacheConfig | None = None,
    workers: int = 1,
) -> Run:
    """Fetch the task's data and splits through the cache, then run every fold."""
    server = server or transport.ServerConfig()
    cache = cache or cachemod.CacheConfig(cachemod.resolve_root())
    dataset = protocol.get_entity(server, "dataset", task.dataset_id, cache)
    table = cachemod.fetch_dataset_payload(cache, server, dataset)
    splits = iter_splits(task, fetch_splits(server, cache, task), n_rows=table.row_count)
    logger.info("running %s on task %s (%d splits)", model.kind, task.id, len(splits))
    return run_on_table(model, task, table, splits, base_seed, workers)


def score(predictions: Sequence[PredictionRow], function: str) -> float:
    """Pooled accuracy over all repeats and folds."""
    if function != "predictive_accuracy":
        raise UnknownMetricError(f"unknown metric {function!r}")
    if not predictions:
        raise ValueError("cannot score an empty prediction list")
    correct = sum(1 for p in predictions if p.prediction == p.truth)
    return correct / len(predictions)


def exact_accuracy(predictions: Sequence[PredictionRow]) -> Fraction:
    return Fraction(sum(1 for p in predictions if p.prediction == p.truth), len(predictions))


def predictions_to_arff(run: Run, task: Task) -> ArffDocument:
    if not run.predictions:
        raise ValueError("run has no predictions")
    return predictions_document(run.predictions, task.class_labels)


def predictions_arff_bytes(run: Run, task: Task) -> bytes:
    return arff.serialize(predictions_to_arff(run, task)).encode("utf-8")


def publish_run(run: Run, task: Task, server: transport.ServerConfig) -> Run:
    """Upload the run's flow (deduplicated by the server) and then the run."""
    if run.flow is None:
        raise ValueError("run carries no flow to publish")
    flow_id = protocol.publish_entity(server, run.flow)
    run = replace(run, flow_id=flow_id)
    run_id = protocol.publish_entity(server, run, {"predictions": predictions_arff_bytes(run, task)})
    return replace(run, id=run_id)
