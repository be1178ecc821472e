import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from omlclient import extension
from omlclient.arff import ArffDocument, Attribute, coerce_table
from omlclient.entities import Flow, FlowParameter
from omlclient.extension import (
    DegenerateFoldError,
    InvalidModelError,
    InvalidParameterError,
    ModelSpec,
    UnknownFlavorError,
    UnknownFlowError,
    flow_to_model,
    model_to_flow,
)
from omlclient.extension import reference as ref
from omlclient.extension.learners import TreeModel


def table_of(rows, kinds, labels=("a", "b")):
    attrs = []
    for i, kind in enumerate(kinds):
        attrs.append(Attribute(f"f{i}", kind, ("u", "v", "w") if kind == "nominal" else ()))
    attrs.append(Attribute("class", "nominal", labels))
    return coerce_table(ArffDocument("t", tuple(attrs), tuple(rows)))


ALL_SPECS = [
    ref.majority(),
    ref.stump(),
    ref.stump(3),
    ref.nearest_neighbor(),
    ref.pipeline(ref.impute_mean(), ref.onehot(), ref.stump()),
    ref.pipeline(ref.impute_mean(), ref.nearest_neighbor()),
    ref.pipeline(ref.impute_mean(), ref.impute_mean(), ref.majority()),
    ref.grid_search(ref.stump(), {"max_depth": [1, 2, 3]}),
    ref.grid_search(ref.pipeline(ref.impute_mean(), ref.stump()), {"learner.max_depth": [1, 2]}),
]


def test_majority_flow():
    flow = model_to_flow(ref.majority())
    assert flow.name == "ref.majority" and flow.parameters == ()
    assert flow.external_version == ref.VERSION


def test_pipeline_flow_shape():
    flow = model_to_flow(ref.pipeline(ref.impute_mean(), ref.onehot(), ref.stump()))
    assert [role for role, _ in flow.components] == ["imputer", "encoder", "learner"]
    assert [c.name for _, c in flow.components] == ["ref.impute.mean", "ref.onehot", "ref.stump"]


def test_gridsearch_flow_shape():
    flow = model_to_flow(ref.grid_search(ref.stump(), {"max_depth": [1, 2, 3]}))
    assert [role for role, _ in flow.components] == ["inner"]
    assert flow.parameter("grid").default_value == "max_depth=1|2|3"


def test_duplicate_roles_are_numbered():
    flow = model_to_flow(ref.pipeline(ref.impute_mean(), ref.impute_mean(), ref.majority()))
    assert [role for role, _ in flow.components] == ["imputer", "imputer2", "learner"]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
def test_roundtrip(spec):
    flow = model_to_flow(spec)
    assert flow_to_model(flow) == spec
    assert model_to_flow(flow_to_model(flow)) == flow


def test_setup_override():
    flow = model_to_flow(ref.pipeline(ref.impute_mean(), ref.stump()))
    spec = flow_to_model(flow, {"learner.max_depth": "2"})
    assert spec.children[-1].param("max_depth") == "2"
    with pytest.raises(InvalidParameterError):
        flow_to_model(flow, {"learner.max_depth": "deep"})
    with pytest.raises(InvalidParameterError):
        flow_to_model(flow, {"learner.min_leaf": "2"})


def test_foreign_flows_are_refused():
    with pytest.raises(UnknownFlowError):
        flow_to_model(Flow("sklearn.svm.classes.SVC", "sklearn==0.19.1", (FlowParameter("C", "1.0"),)))
    with pytest.raises(UnknownFlowError):
        flow_to_model(Flow("ref.forest", ref.VERSION))
    with pytest.raises(UnknownFlavorError):
        model_to_flow(ModelSpec("sk", "svc"))


def test_structure_rules():
    with pytest.raises(InvalidModelError):
        ref.pipeline(ref.stump(), ref.majority())
    with pytest.raises(InvalidModelError):
        ref.pipeline(ref.impute_mean())
    with pytest.raises(InvalidParameterError):
        ref.stump(0)
    with pytest.raises(InvalidModelError):
        ref.node("nn", (ref.majority(),))


def test_registry_rejects_overlapping_prefix():
    class Clash:
        flavor, prefix, version = "other", "ref.x", "1"

    with pytest.raises(ValueError):
        extension.register_extension(Clash())


def test_parse_spec():
    assert ref.parse_spec("ref.pipeline:impute.mean,onehot,stump") == ref.pipeline(ref.impute_mean(), ref.onehot(), ref.stump())
    assert ref.parse_spec("ref.stump,max_depth=2") == ref.stump(2)
    assert ref.parse_spec("pipeline:impute.mean,stump,max_depth=3") == ref.pipeline(ref.impute_mean(), ref.stump(3))
    assert ref.parse_spec("gridsearch,grid=max_depth=1|2|3:stump") == ref.grid_search(ref.stump(), {"max_depth": [1, 2, 3]})
    nested = ref.parse_spec("gridsearch,grid=learner.max_depth=1|2:(pipeline:impute.mean,stump)")
    assert nested == ref.grid_search(ref.pipeline(ref.impute_mean(), ref.stump()), {"learner.max_depth": [1, 2]})
    for bad in ["", "ref.tree", "stump,depth", "pipeline:,stump", "gridsearch:(stump"]:
        with pytest.raises((InvalidModelError, InvalidParameterError)):
            ref.parse_spec(bad)


def test_majority_confidences():
    table = table_of([(0.0, "a"), (1.0, "a"), (2.0, "b"), (3.0, "b"), (4.0, "a")], ["numeric"])
    preds, trace = extension.fit_predict_fold(ref.majority(), table, "class", ("a", "b"), [0, 1, 2], [3, 4], 1)
    assert trace is None
    assert [p.prediction for p in preds] == ["a", "a"]
    assert preds[0].confidences == (2 / 3, 1 / 3)


def test_majority_tie_goes_to_first_label():
    table = table_of([(0.0, "b"), (1.0, "a"), (2.0, "a")], ["numeric"])
    preds, _ = extension.fit_predict_fold(ref.majority(), table, "class", ("a", "b"), [0, 1], [2], 1)
    assert preds[0].prediction == "a"


def test_majority_tolerates_one_class_but_others_do_not():
    table = table_of([(0.0, "a"), (1.0, "a"), (2.0, "b")], ["numeric"])
    preds, _ = extension.fit_predict_fold(ref.majority(), table, "class", ("a", "b"), [0, 1], [2], 1)
    assert preds[0].confidences == (1.0, 0.0)
    for spec in (ref.stump(), ref.nearest_neighbor()):
        with pytest.raises(DegenerateFoldError):
            extension.fit_predict_fold(spec, table, "class", ("a", "b"), [0, 1], [2], 1)


def test_nearest_neighbour_identity():
    table = table_of([(0.0, 0.0, "a"), (5.0, 5.0, "b"), (5.0, 5.0, "a")], ["numeric", "numeric"])
    preds, _ = extension.fit_predict_fold(ref.nearest_neighbor(), table, "class", ("a", "b"), [0, 1], [2], 7)
    assert preds[0].prediction == "b" and preds[0].confidences == (0.0, 1.0)


def test_nearest_neighbour_uses_training_means_and_one_hot():
    rows = [(None, "u", "a"), (2.0, "v", "b"), (4.0, "u", "a"), (3.0, "u", "b")]
    table = table_of(rows, ["numeric", "nominal"])
    # row 3 -> x=3 equals the training mean; nearest by nominal is rows 0 and 2 (both 'a')
    preds, _ = extension.fit_predict_fold(ref.nearest_neighbor(), table, "class", ("a", "b"), [0, 1, 2], [3], 1)
    assert preds[0].prediction == "a"


def _stump_oracle(X, y):
    # brute force: every feature, every midpoint between distinct values
    best = None
    for j in range(X.shape[1]):
        values = sorted(set(X[:, j]))
        for lo, hi in zip(values, values[1:]):
            t = (lo + hi) / 2
            left = Counter(y[X[:, j] <= t])
            right = Counter(y[X[:, j] > t])
            acc = max(left.values()) + max(right.values())
            if best is None or acc > best[0]:
                best = (acc, j, t)
    return best


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32))
def test_stump_matches_brute_force(seed):
    rng = random.Random(seed)
    n, d = rng.randint(4, 25), rng.randint(1, 4)
    X = np.array([[float(rng.randint(0, 5)) for _ in range(d)] for _ in range(n)])
    y = np.array([rng.randint(0, 2) for _ in range(n)])
    y[0], y[1] = 0, 1
    oracle = _stump_oracle(X, y)
    model = TreeModel.fit(X, y, 3, 1)
    if oracle is None:
        assert model.root.split is None
        return
    split = model.root.split
    assert (split.feature, split.threshold) == (oracle[1], oracle[2])
    train_correct = sum(int(k == t) for (k, _), t in zip(model.predict(X, np.arange(n)), y))
    assert train_correct == oracle[0]


def _grid_oracle(table, train, depths, seed, labels):
    # independent inner two-fold CV: shuffle with Random(seed), deal alternately
    rows = sorted(train)
    random.Random(seed).shuffle(rows)
    halves = [sorted(rows[0::2]), sorted(rows[1::2])]
    truth = table["class"].labels()
    scores = []
    for depth in depths:
        correct = 0
        for fit_rows, eval_rows in [(halves[0], halves[1]), (halves[1], halves[0])]:
            preds, _ = extension.fit_predict_fold(ref.stump(depth), table, "class", labels, fit_rows, eval_rows, seed)
            correct += sum(p.prediction == truth[p.row_id] for p in preds)
        scores.append(correct / len(rows))
    return scores


def test_grid_search_trace_matches_exhaustive_oracle():
    rng = random.Random(5)
    rows = []
    for i in range(60):
        x, z = rng.random(), rng.random()
        label = "a" if (x < 0.5) ^ (z < 0.3) else "b"
        rows.append((x, z, label))
    table = table_of(rows, ["numeric", "numeric"])
    train, test = list(range(0, 60, 3)) + list(range(1, 60, 3)), list(range(2, 60, 3))
    spec = ref.grid_search(ref.stump(), {"max_depth": [1, 2, 3]})
    preds, trace = extension.fit_predict_fold(spec, table, "class", ("a", "b"), train, test, 11)
    assert len(trace) == 3 and sum(t.selected for t in trace) == 1
    oracle = _grid_oracle(table, train, [1, 2, 3], 11, ("a", "b"))
    assert [t.evaluation for t in trace] == oracle
    chosen = next(t for t in trace if t.selected)
    assert chosen.evaluation == max(oracle)
    assert chosen.iteration == oracle.index(max(oracle))
    assert [t.setup_string for t in trace] == ["max_depth=1", "max_depth=2", "max_depth=3"]
    # the final model is the selected depth refit on the whole training fold
    refit, _ = extension.fit_predict_fold(ref.stump(chosen.iteration + 1), table, "class", ("a", "b"), train, test, 11)
    assert refit == preds


def random_table(rng, n):
    rows = []
    for _ in range(n):
        rows.append(
            (
                None if rng.random() < 0.1 else float(rng.randint(0, 3)),
                None if rng.random() < 0.1 else rng.choice("uvw"),
                rng.choice("ab"),
            )
        )
    rows[0] = rows[0][:2] + ("a",)
    rows[1] = rows[1][:2] + ("b",)
    return table_of(rows, ["numeric", "nominal"])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(ALL_SPECS))
def test_fold_contract(seed, spec):
    rng = random.Random(seed)
    n = rng.randint(8, 30)
    table = random_table(rng, n)
    rows = list(range(n))
    test = sorted(rng.sample(rows[2:], rng.randint(1, n // 2)))
    train = [r for r in rows if r not in test]
    labels = ("a", "b")
    first = extension.fit_predict_fold(spec, table, "class", labels, train, test, seed)
    assert first == extension.fit_predict_fold(spec, table, "class", labels, train, test, seed)
    preds, _ = first
    assert [p.row_id for p in preds] == test
    for p in preds:
        assert abs(sum(p.confidences) - 1) <= 1e-6
        assert all(0 <= c <= 1 for c in p.confidences)
        assert labels[int(np.argmax(p.confidences))] == p.prediction
    shuffled = test[:]
    rng.shuffle(shuffled)
    again, _ = extension.fit_predict_fold(spec, table, "class", labels, train, shuffled, seed)
    assert {p.row_id: p for p in again} == {p.row_id: p for p in preds}


def test_fold_arguments_are_checked():
    table = table_of([(0.0, "a"), (1.0, "b")], ["numeric"])
    with pytest.raises(ValueError):
        extension.fit_predict_fold(ref.majority(), table, "class", ("a", "b"), [0, 1], [1], 1)
    with pytest.raises(IndexError):
        extension.fit_predict_fold(ref.majority(), table, "class", ("a", "b"), [0], [5], 1)


def test_grid_search_survives_one_class_inner_half():
    # four training rows with a single 'b': one inner half is always all 'a'
    table = table_of([(0.0, "a"), (1.0, "b"), (2.0, "a"), (3.0, "a"), (1.5, "b")], ["numeric"])
    spec = ref.grid_search(ref.stump(), {"max_depth": [1, 2, 3]})
    preds, trace = extension.fit_predict_fold(spec, table, "class", ("a", "b"), [0, 1, 2, 3], [4], 3)
    assert len(preds) == 1 and sum(t.selected for t in trace) == 1
    # the all-'a' half guesses 'a' for both rows of the other half, getting one right
    assert all(t.evaluation >= 0.25 for t in trace)
    with pytest.raises(DegenerateFoldError):
        extension.fit_predict_fold(spec, table, "class", ("a", "b"), [0, 2, 3], [4], 3)
