"""Numeric machinery behind the reference learners.

Learners see a float design matrix: numeric columns with missing cells set to
the training mean, nominal columns one-hot encoded (missing -> all zeros),
string and date columns dropped. Labels are indices into the task's class
label list. Every fitted object is immutable after ``fit``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..arff import Column, DataTable
from . import DegenerateFoldError


def label_indices(table: DataTable, target: str, class_labels: Sequence[str]) -> np.ndarray:
    """Target cells as indices into ``class_labels``; ``-1`` where missing."""
    col = table[target]
    if col.kind != "nominal":
        raise DegenerateFoldError(f"target {target!r} is not nominal")
    lookup = {label: i for i, label in enumerate(class_labels)}
    out = np.full(len(col.values), -1, dtype=np.int64)
    for i, (code, miss) in enumerate(zip(col.values, col.missing)):
        if not miss:
            label = col.categories[code]
            if label not in lookup:
                raise DegenerateFoldError(f"target value {label!r} is not a class label")
            out[i] = lookup[label]
    return out


# -- transformers -------------------------------------------------------------


def _train_mean(col: Column, rows: np.ndarray) -> float:
    vals = col.values[rows][~col.missing[rows]]
    return float(vals.mean()) if len(vals) else 0.0


@dataclass(frozen=True)
class MeanImputer:
    means: tuple[tuple[str, float], ...]

    @classmethod
    def fit(cls, table: DataTable, target: str, rows: np.ndarray) -> "MeanImputer":
        return cls(tuple((c.name, _train_mean(c, rows)) for c in table.columns if c.kind == "numeric" and c.name != target))

    def transform(self, table: DataTable) -> DataTable:
        means = dict(self.means)
        cols = []
        for c in table.columns:
            if c.name in means and c.missing.any():
                values = np.where(c.missing, means[c.name], c.values)
                c = replace(c, values=values, missing=np.zeros_like(c.missing))
            cols.append(c)
        return DataTable(tuple(cols), table.row_count)


@dataclass(frozen=True)
class OneHotEncoder:
    # unseen categories cannot occur: codes always index the declared values
    columns: tuple[str, ...]

    @classmethod
    def fit(cls, table: DataTable, target: str, rows: np.ndarray) -> "OneHotEncoder":
        return cls(tuple(c.name for c in table.columns if c.kind == "nominal" and c.name != target))

    def transform(self, table: DataTable) -> DataTable:
        cols = []
        n = table.row_count
        for c in table.columns:
            if c.name not in self.columns:
                cols.append(c)
                continue
            for k, category in enumerate(c.categories):
                values = (c.values == k).astype(np.float64)
                cols.append(Column(f"{c.name}={category}", "numeric", values, np.zeros(n, dtype=bool)))
        return DataTable(tuple(cols), n)


@dataclass(frozen=True)
class DesignEncoder:
    """Maps a table to the learners' float matrix using training statistics."""

    target: str
    means: tuple[tuple[str, float], ...]

    @classmethod
    def fit(cls, table: DataTable, target: str, rows: np.ndarray) -> "DesignEncoder":
        return cls(target, tuple((c.name, _train_mean(c, rows)) for c in table.columns if c.kind == "numeric" and c.name != target))

    def matrix(self, table: DataTable, rows: np.ndarray) -> np.ndarray:
        means = dict(self.means)
        parts = []
        for c in table.columns:
            if c.name == self.target:
                continue
            if c.kind == "numeric":
                parts.append(np.where(c.missing[rows], means.get(c.name, 0.0), c.values[rows])[:, None])
            elif c.kind == "nominal":
                codes = c.values[rows]
                parts.append((codes[:, None] == np.arange(len(c.categories))[None, :]).astype(np.float64))
        if not parts:
            return np.zeros((len(rows), 0))
        return np.hstack(parts)


# -- learners -----------------------------------------------------------------


def _distribution(counts: np.ndarray) -> tuple[int, tuple[float, ...]]:
    total = counts.sum()
    # argmax returns the first maximum, i.e. ties go to the earlier class label
    return int(np.argmax(counts)), tuple(float(c) / float(total) for c in counts)


def _require_two_classes(y: np.ndarray, learner: str) -> None:
    if len(np.unique(y)) < 2:
        raise DegenerateFoldError(f"{learner} needs at least two classes in the training fold")


@dataclass(frozen=True)
class MajorityModel:
    counts: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, n_classes: int) -> "MajorityModel":
        if len(y) == 0:
            raise DegenerateFoldError("empty training fold")
        return cls(np.bincount(y, minlength=n_classes))

    def predict(self, X: np.ndarray, rows: np.ndarray) -> list[tuple[int, tuple[float, ...]]]:
        result = _distribution(self.counts)
        return [result] * len(rows)


@dataclass(frozen=True)
class _Split:
    feature: int
    threshold: float
    left: "_Node"
    right: "_Node"


@dataclass(frozen=True)
class _Node:
    counts: np.ndarray
    split: _Split | None = None


def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int) -> tuple[int, float, float] | None:
    """Best ``(accuracy, feature, threshold)`` by training accuracy.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    best = None
    onehot = np.eye(n_classes, dtype=np.int64)[y]
    total = onehot.sum(axis=0)
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        v = X[order, j]
        valid = np.flatnonzero(v[:-1] < v[1:])
        if len(valid) == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[valid]
        right = total[None, :] - left
        acc = left.max(axis=1) + right.max(axis=1)
        k = int(np.argmax(acc))
        if best is None or acc[k] > best[0]:
            p = valid[k]
            best = (int(acc[k]), j, (v[p] + v[p + 1]) / 2.0)
    return best


def _grow(X: np.ndarray, y: np.ndarray, n_classes: int, depth: int) -> _Node:
    counts = np.bincount(y, minlength=n_classes)
    if depth == 0 or np.count_nonzero(counts) <= 1:
        return _Node(counts)
    found = _best_split(X, y, n_classes)
    if found is None:
        return _Node(counts)
    _, j, thr = found
    go_left = X[:, j] <= thr
    return _Node(
        counts,
        _Split(
            j,
            thr,
            _grow(X[go_left], y[go_left], n_classes, depth - 1),
            _grow(X[~go_left], y[~go_left], n_classes, depth - 1),
        ),
    )


@dataclass(frozen=True)
class TreeModel:
    """Depth-limited threshold tree; depth 1 is a decision stump."""

    root: _Node

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, n_classes: int, max_depth: int) -> "TreeModel":
        _require_two_classes(y, "stump")
        return cls(_grow(X, y, n_classes, max_depth))

    def predict(self, X: np.ndarray, rows: np.ndarray) -> list[tuple[int, tuple[float, ...]]]:
        out = []
        for x in X:
            node = self.root
            while node.split is not None:
                node = node.split.left if x[node.split.feature] <= node.split.threshold else node.split.right
            out.append(_distribution(node.counts))
        return out


@dataclass(frozen=True)
class NearestNeighborModel:
    """1-NN under Euclidean distance; equidistant neighbours are drawn at random.

    The draw for a test row uses ``Random(f"{seed}:{row}")`` so a row's
    prediction does not depend on which other rows are predicted with it.
    """

    X: np.ndarray
    y: np.ndarray
    n_classes: int
    seed: int

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int) -> "NearestNeighborModel":
        _require_two_classes(y, "nearest neighbour")
        return cls(X, y, n_classes, seed)

    def predict(self, X: np.ndarray, rows: np.ndarray) -> list[tuple[int, tuple[float, ...]]]:
        out = []
        for x, row in zip(X, rows):
            dist = ((self.X - x) ** 2).sum(axis=1)
            candidates = np.flatnonzero(dist == dist.min())
            pick = candidates[0]
            if len(candidates) > 1:
                pick = random.Random(f"{self.seed}:{int(row)}").choice(list(candidates))
            label = int(self.y[pick])
            conf = [0.0] * self.n_classes
            conf[label] = 1.0
            out.append((label, tuple(conf)))
        return out
