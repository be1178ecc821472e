"""Regenerate the mock server's fixture corpus.

All data is synthetic and seeded; running this twice produces identical files.
Ids echo well-known platform ids (task 6 on 'letter', flow 8353) so examples
read naturally, but none of the values are real platform data.

    python scripts/make_fixtures.py [--out DIR]
"""

from __future__ import annotations

import argparse
import math
import random
import shutil
import string
from pathlib import Path

from omlclient import arff, codec
from omlclient.arff import ArffDocument, Attribute
from omlclient.cache import md5_hex
from omlclient.entities import (
    DatasetDescription,
    EstimationProcedure,
    EvaluationRecord,
    Flow,
    FlowParameter,
    Suite,
    Task,
)
from omlclient.protocol import describe_features
from omlclient.runner import make_splits

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "omlclient" / "mockserver" / "fixtures"

LETTER_FEATURES = [
    "x-box", "y-box", "width", "high", "onpix", "x-bar", "y-bar", "x2bar",
    "y2bar", "xybar", "x2ybr", "xy2br", "x-ege", "xegvy", "y-ege", "yegvx",
]

ERRORS = [
    ("unknown_route", 0, 404, "Unknown route"),
    ("bad_request", 100, 400, "Bad request"),
    ("auth_required", 102, 401, "Authentication failed"),
    ("unknown_dataset", 111, 412, "Unknown dataset"),
    ("invalid_upload", 131, 412, "Upload validation failed"),
    ("unknown_task", 151, 412, "Unknown task"),
    ("unknown_flow", 181, 412, "Unknown flow"),
    ("run_rejected", 203, 412, "Run upload rejected"),
    ("unknown_run", 221, 412, "Unknown run"),
    ("unknown_function", 542, 412, "Unknown evaluation function"),
    ("unknown_study", 601, 412, "Unknown study"),
]


def letter() -> ArffDocument:
    rng = random.Random(6)
    classes = list(string.ascii_uppercase)
    centres = {c: [rng.uniform(2, 13) for _ in LETTER_FEATURES] for c in classes}
    # every class at least 8 times, the rest skewed towards early letters so
    # that training folds have a clear majority class
    labels = [c for c in classes for _ in range(8)]
    labels += rng.choices(classes, weights=range(26, 0, -1), k=500 - len(labels))
    rng.shuffle(labels)
    rows = []
    for label in labels:
        feats = [float(min(15, max(0, round(m + rng.gauss(0, 2.0))))) for m in centres[label]]
        rows.append((*feats, label))
    attrs = [Attribute(n, "numeric") for n in LETTER_FEATURES] + [Attribute("class", "nominal", tuple(classes))]
    return ArffDocument("letter", tuple(attrs), tuple(rows))


def mixed_mini() -> ArffDocument:
    rng = random.Random(31)
    purposes = ("car", "furniture", "education", "business")
    housing = ("own", "rent", "free")
    rows = []
    for _ in range(200):
        good = rng.random() < 0.65
        duration = float(rng.randint(6, 24) if good else rng.randint(12, 48))
        amount = round(rng.uniform(500, 4000) if good else rng.uniform(2000, 9000), 2)
        age = float(rng.randint(22, 70)) if rng.random() > 0.1 else None
        purpose = rng.choice(purposes[:2] if good else purposes[1:]) if rng.random() > 0.08 else None
        house = rng.choice(housing[:1] * 3 + housing[1:] if good else housing)
        rows.append((duration, amount, age, purpose, house, "good" if good else "bad"))
    attrs = (
        Attribute("duration", "numeric"),
        Attribute("credit_amount", "numeric"),
        Attribute("age", "numeric"),
        Attribute("purpose", "nominal", purposes),
        Attribute("housing", "nominal", housing),
        Attribute("class", "nominal", ("good", "bad")),
    )
    return ArffDocument("mixed-mini", attrs, tuple(rows))


def binary_mini() -> ArffDocument:
    rng = random.Random(37)
    rows = []
    for i in range(150):
        pos = i % 3 == 0
        feats = []
        for j in range(4):
            value = round(rng.gauss(1.5 * j + (2.0 if pos else 0.0), 1.0), 3)
            feats.append(value if rng.random() > 0.05 else None)
        rows.append((*feats, "pos" if pos else "neg"))
    attrs = tuple(Attribute(f"f{j}", "numeric") for j in range(4)) + (Attribute("class", "nominal", ("neg", "pos")),)
    return ArffDocument("binary-mini", attrs, tuple(rows))


def tiny_a() -> ArffDocument:
    rows = tuple((float(i), float(i % 4), "x" if i < 6 else "y") for i in range(12))
    attrs = (Attribute("a", "numeric"), Attribute("b", "numeric"), Attribute("class", "nominal", ("x", "y")))
    return ArffDocument("tiny-a", attrs, rows)


def tiny_b() -> ArffDocument:
    words = ["alpha", "beta gamma", "delta, epsilon", "zeta", "eta", "theta", "iota", "kappa", "lambda", "mu"]
    rows = tuple((w, float(len(w)), "short" if len(w) < 5 else "long") for w in words)
    attrs = (Attribute("word", "string"), Attribute("length", "numeric"), Attribute("class", "nominal", ("short", "long")))
    return ArffDocument("tiny-b", attrs, rows)


def sparse_mini() -> ArffDocument:
    rng = random.Random(11)
    rows = []
    for i in range(30):
        cls = "a" if i % 2 else "b"
        cells = [float(rng.randint(1, 5)) if rng.random() < 0.3 else 0.0 for _ in range(6)]
        if cls == "b":
            cells[0] = float(rng.randint(3, 9))
        rows.append((*cells, cls))
    attrs = tuple(Attribute(f"w{j}", "numeric") for j in range(6)) + (Attribute("class", "nominal", ("a", "b")),)
    return ArffDocument("sparse-mini", attrs, tuple(rows), sparse=True)


def nn_ties() -> tuple[ArffDocument, ArffDocument]:
    """Triples (A, B, M) on a line: M sits exactly between A and B.

    The split table puts every M in the test fold of fold 0 with all A and B
    points in training, so each M has two equidistant neighbours of different
    classes.
    """
    rows, split_rows = [], []
    for k in range(20):
        x = 10.0 * k
        rows += [(x, 0.0, "left"), (x + 2.0, 0.0, "right"), (x + 1.0, 0.0, "left" if k % 2 else "right")]
    n = len(rows)
    for fold, is_test in ((0, lambda r: r % 3 == 2), (1, lambda r: r % 3 != 2)):
        split_rows += [("TRAIN", float(r), 0.0, float(fold)) for r in range(n) if not is_test(r)]
        split_rows += [("TEST", float(r), 0.0, float(fold)) for r in range(n) if is_test(r)]
    attrs = (Attribute("x", "numeric"), Attribute("y", "numeric"), Attribute("class", "nominal", ("left", "right")))
    splits = ArffDocument(
        "splits",
        (
            Attribute("type", "nominal", ("TRAIN", "TEST")),
            Attribute("rowid", "numeric"),
            Attribute("repeat", "numeric"),
            Attribute("fold", "numeric"),
        ),
        tuple(split_rows),
    )
    return ArffDocument("nn-ties", attrs, tuple(rows)), splits


def qualities(doc: ArffDocument, target: str) -> dict[str, float]:
    t = doc.column_index(target)
    return {
        "NumberOfInstances": float(len(doc.rows)),
        "NumberOfFeatures": float(len(doc.attributes)),
        "NumberOfClasses": float(len(doc.attributes[t].nominal_values)),
        "NumberOfMissingValues": float(sum(v is None for row in doc.rows for v in row)),
    }


def svm_flows() -> tuple[Flow, Flow]:
    imputer = Flow(
        "sklearn.preprocessing.imputation.Imputer",
        "sklearn==0.19.1",
        (FlowParameter("strategy", '"mean"', "str"), FlowParameter("axis", "0", "int")),
        dependencies="sklearn>=0.19.1\nnumpy>=1.6.1\nscipy>=0.9",
        id=14,
    )
    svc = Flow(
        "sklearn.svm.classes.SVC",
        "sklearn==0.19.1",
        (
            FlowParameter("C", "1.0", "float"),
            FlowParameter("gamma", '"auto"', "float"),
            FlowParameter("kernel", '"rbf"', "str"),
            FlowParameter("tol", "0.001", "float"),
        ),
        dependencies="sklearn>=0.19.1\nnumpy>=1.6.1\nscipy>=0.9",
        id=16,
    )
    pipeline = Flow(
        "sklearn.pipeline.Pipeline",
        "sklearn==0.19.1",
        (FlowParameter("memory", "null", "str"),),
        (("imputation", imputer), ("classifier", svc)),
        dependencies="sklearn>=0.19.1\nnumpy>=1.6.1\nscipy>=0.9",
        id=8353,
    )
    knn = Flow(
        "sklearn.neighbors.classification.KNeighborsClassifier",
        "sklearn==0.19.1",
        (FlowParameter("n_neighbors", "5", "int"), FlowParameter("weights", '"uniform"', "str")),
        dependencies="sklearn>=0.19.1\nnumpy>=1.6.1\nscipy>=0.9",
        id=8315,
    )
    return pipeline, knn


def svm_evaluations() -> list[EvaluationRecord]:
    rng = random.Random(8353)
    records = []
    for run_id in range(1, 51):
        log_c = round(rng.uniform(-3.0, 5.0), 3)
        log_g = round(rng.uniform(-5.0, 1.0), 3)
        c = float(f"{10 ** log_c:.6g}")
        g = float(f"{10 ** log_g:.6g}")
        acc = 0.04 + 0.9 * math.exp(-((log_c - 2.0) ** 2) / 8.0 - ((log_g + 2.0) ** 2) / 2.0)
        records.append(
            EvaluationRecord(
                run_id,
                6,
                8353,
                "predictive_accuracy",
                round(acc, 4),
                {
                    "sklearn.preprocessing.imputation.Imputer(14)_strategy": '"mean"',
                    "sklearn.svm.classes.SVC(16)_C": arff.format_number(c),
                    "sklearn.svm.classes.SVC(16)_gamma": arff.format_number(g),
                    "sklearn.svm.classes.SVC(16)_kernel": '"rbf"',
                },
            )
        )
    for k, run_id in enumerate(range(51, 56)):
        records.append(
            EvaluationRecord(
                run_id,
                6,
                8315,
                "predictive_accuracy",
                round(0.80 + 0.02 * k, 4),
                {
                    "sklearn.neighbors.classification.KNeighborsClassifier(8315)_n_neighbors": str(2 * k + 1),
                    "sklearn.neighbors.classification.KNeighborsClassifier(8315)_weights": '"uniform"',
                },
            )
        )
    return records


def write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = parser.parse_args()
    out: Path = args.out
    if out.exists():
        shutil.rmtree(out)

    ties_doc, ties_splits = nn_ties()
    datasets = {2: tiny_a(), 3: tiny_b(), 6: letter(), 11: sparse_mini(), 31: mixed_mini(), 37: binary_mini(), 40: ties_doc}
    for did, doc in datasets.items():
        payload = arff.serialize(doc).encode("utf-8")
        desc = DatasetDescription(
            id=did,
            name=doc.relation,
            version=1,
            features=describe_features(doc),
            default_target_attribute="class",
            file_checksum=md5_hex(payload),
            qualities=qualities(doc, "class"),
        )
        write(out / "dataset" / str(did) / "payload.arff", payload)
        write(out / "dataset" / str(did) / "description.xml", codec.encode_dataset(desc))

    # task id -> (dataset id, folds, repeats)
    tasks = {6: (6, 10, 1), 11: (11, 3, 1), 31: (31, 5, 2), 37: (37, 10, 1), 40: (40, 2, 1)}
    for tid, (did, folds, repeats) in tasks.items():
        doc = datasets[did]
        labels = doc.attributes[doc.column_index("class")].nominal_values
        task = Task(
            id=tid,
            task_type="supervised_classification",
            dataset_id=did,
            target_name="class",
            estimation_procedure=EstimationProcedure("crossvalidation", repeats, folds),
            class_labels=labels,
        )
        splits = ties_splits if tid == 40 else make_splits(len(doc.rows), "crossvalidation", folds, repeats, seed=tid)
        write(out / "task" / str(tid) / "description.xml", codec.encode_task(task))
        write(out / "task" / str(tid) / "splits.arff", arff.serialize(splits).encode("utf-8"))

    for flow in svm_flows():
        write(out / "flow" / str(flow.id) / "description.xml", codec.encode_flow(flow))

    suites = [
        Suite("local-mini", "Local mini benchmark suite", (6, 31, 37), id=1),
        Suite("OpenML-CC18", "Fixture stand-in for the CC18 suite", (6, 11, 31, 37), id=99),
    ]
    for suite in suites:
        write(out / "study" / suite.alias / "description.xml", codec.encode_suite(suite))

    write(out / "evaluations.xml", codec.encode_evaluations(svm_evaluations()))
    lines = ["name\tcode\thttp_status\tmessage"] + ["\t".join(map(str, e)) for e in ERRORS]
    write(out / "errors.tsv", ("\n".join(lines) + "\n").encode())
    print(f"fixtures written to {out}")


if __name__ == "__main__":
    main()
