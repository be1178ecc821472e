"""Predictions ARFF schema shared by the runner, the client and the mock server.

Attributes, in order: ``repeat``, ``fold``, ``row_id`` (numeric),
``prediction`` and ``correct`` (nominal over the class labels), then one
numeric ``confidence.<label>`` per class label in task order.
"""

from __future__ import annotations

from typing import Sequence

from .arff import ArffDocument, Attribute
from .entities import PredictionRow

FIXED = ("repeat", "fold", "row_id", "prediction", "correct")


def canonical_order(rows: Sequence[PredictionRow]) -> list[PredictionRow]:
    return sorted(rows, key=lambda r: (r.repeat, r.fold, r.row_id))


def predictions_document(rows: Sequence[PredictionRow], class_labels: Sequence[str], relation: str = "predictions") -> ArffDocument:
    labels = tuple(class_labels)
    attrs = [
        Attribute("repeat", "numeric"),
        Attribute("fold", "numeric"),
        Attribute("row_id", "numeric"),
        Attribute("prediction", "nominal", labels),
        Attribute("correct", "nominal", labels),
    ] + [Attribute(f"confidence.{label}", "numeric") for label in labels]
    data = [
        (float(r.repeat), float(r.fold), float(r.row_id), r.prediction, r.truth, *map(float, r.confidences))
        for r in canonical_order(rows)
    ]
    return ArffDocument(relation, tuple(attrs), tuple(data))


def class_labels_of(doc: ArffDocument) -> tuple[str, ...]:
    names = [a.name for a in doc.attributes[: len(FIXED)]]
    if tuple(names) != FIXED:
        raise ValueError(f"not a predictions document: leading attributes {names}")
    return doc.attributes[3].nominal_values


def rows_from_document(doc: ArffDocument) -> list[PredictionRow]:
    labels = class_labels_of(doc)
    expected = [f"confidence.{label}" for label in labels]
    if [a.name for a in doc.attributes[len(FIXED) :]] != expected:
        raise ValueError("confidence columns do not match the class labels")
    return [
        PredictionRow(
            repeat=int(row[0]),
            fold=int(row[1]),
            row_id=int(row[2]),
            prediction=row[3],
            truth=row[4],
            confidences=tuple(row[len(FIXED) :]),
        )
        for row in doc.rows
    ]
