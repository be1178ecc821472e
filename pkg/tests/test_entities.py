from dataclasses import replace

from hypothesis import given, strategies as st

from omlclient.entities import (
    MAX_FLOW_DEPTH,
    DatasetDescription,
    EstimationProcedure,
    EvaluationRecord,
    Feature,
    Flow,
    FlowParameter,
    PredictionRow,
    Run,
    Suite,
    Task,
    Trace,
    TraceRow,
    canonical_flow_name,
    check_task_against_dataset,
    validate,
    without_ids,
)


def make_task(**kw):
    base = dict(
        task_type="supervised_classification",
        dataset_id=6,
        target_name="class",
        estimation_procedure=EstimationProcedure("crossvalidation", 1, 10),
        class_labels=("a", "b"),
        id=6,
    )
    return Task(**(base | kw))


def test_duplicate_parameter_name():
    flow = Flow("ref.x", "1", (FlowParameter("C", "1"), FlowParameter("C", "2")))
    assert validate(flow) == ["parameter name not unique: C"]


def test_single_class_label():
    assert validate(make_task(class_labels=("a",))) == ["class_labels must have >= 2 entries"]


def test_suite_from_figure_two_is_valid():
    assert validate(Suite("OpenML-CC18", "", (6,))) == []


def test_suite_rules():
    assert validate(Suite("x", "", ())) == ["task_ids must be non-empty"]
    assert "task_ids contain duplicates" in validate(Suite("x", "", (6, 6)))


def test_canonical_names():
    leaf = Flow("ref.majority", "1")
    assert canonical_flow_name(leaf) == "ref.majority"
    pipe = Flow("ref.pipeline", "1", components=(("imputer", Flow("ref.impute.mean", "1")), ("learner", Flow("ref.stump", "1"))))
    assert canonical_flow_name(pipe) == "ref.pipeline(imputer=ref.impute.mean,learner=ref.stump)"
    grid = Flow("ref.gridsearch", "1", components=(("inner", pipe),))
    assert canonical_flow_name(grid) == "ref.gridsearch(inner=ref.pipeline(imputer=ref.impute.mean,learner=ref.stump))"


def test_dataset_rules():
    f = (Feature(0, "a", "numeric"), Feature(1, "a", "nominal", ("x",)))
    problems = validate(DatasetDescription("d", features=f, default_target_attribute="zzz"))
    assert "feature name not unique: a" in problems
    assert "default_target_attribute is not a feature: zzz" in problems
    assert validate(DatasetDescription("d", features=(Feature(1, "a", "numeric"),)))
    assert validate(DatasetDescription("d", file_checksum="nope")) == ["file_checksum must be a hex MD5 digest"]


def test_feature_rules():
    assert validate(Feature(0, "c", "nominal")) == ["nominal feature without values: c"]
    assert validate(Feature(0, "c", "nominal", ("x", "x"))) == ["nominal values not unique: c"]
    assert validate(Feature(0, "c", "colour")) == ["feature kind not recognised: colour"]


def test_estimation_procedure_rules():
    assert validate(EstimationProcedure("crossvalidation", 1, 1)) == ["folds must be >= 2 for crossvalidation"]
    assert validate(EstimationProcedure("holdout", 1, None, 100.0)) == ["percentage must lie in (0, 100) for holdout"]
    assert validate(EstimationProcedure("holdout", 1, None, 33.0)) == []
    assert validate(EstimationProcedure("crossvalidation", 0, 10)) == ["repeats must be >= 1"]


def test_task_target_must_be_dataset_feature():
    ds = DatasetDescription("d", features=(Feature(0, "x", "numeric"),), id=1)
    assert check_task_against_dataset(make_task(), ds) == ["target_name is not a feature of dataset 1: class"]


def test_flow_depth_limit():
    flow = Flow("ref.leaf", "1")
    for _ in range(MAX_FLOW_DEPTH - 1):
        flow = Flow("ref.wrap", "1", components=(("inner", flow),))
    assert validate(flow) == []
    deeper = Flow("ref.wrap", "1", components=(("inner", flow),))
    assert validate(deeper) == [f"flow tree deeper than {MAX_FLOW_DEPTH} levels"]


def test_flow_role_and_name_rules():
    leaf = Flow("ref.a", "1")
    assert validate(Flow("ref.p", "1", components=(("x", leaf), ("x", leaf)))) == ["component role not unique: x"]
    assert validate(Flow("bad..name", "1"))


def test_run_rules():
    flow = Flow("ref.stump", "1", (FlowParameter("max_depth", "1", "int"),))
    rows = (PredictionRow(0, 0, 1, "a", "a", (0.6, 0.4)), PredictionRow(0, 0, 1, "a", "b", (0.6, 0.4)))
    run = Run(6, 1, (("max_depth", "2"), ("nope", "1")), 1, rows, flow=flow)
    problems = validate(run)
    assert "duplicate prediction for repeat/fold/row_id (0, 0, 1)" in problems
    assert "setup path does not resolve to a flow parameter: nope" in problems
    assert validate(Run(6, 1, (), 2**63)) == ["seed must be a 64-bit integer"]
    assert validate(Run(6, 1, (), -(2**63))) == []


def test_confidence_rules():
    assert validate(PredictionRow(0, 0, 0, "a", "a", (0.5, 0.4))) == ["confidences do not sum to 1 at row 0"]
    assert validate(PredictionRow(0, 0, 0, "a", "a", (1.2, -0.2))) == ["confidence outside [0, 1] at row 0"]


def test_trace_needs_one_selected_row_per_fold():
    rows = (TraceRow(0, 0, 0, "d=1", 0.5, True), TraceRow(0, 0, 1, "d=2", 0.6, True), TraceRow(0, 1, 0, "d=1", 0.5, False))
    assert validate(Trace(rows)) == [
        "trace must select exactly one row for repeat 0 fold 0, found 2",
        "trace must select exactly one row for repeat 0 fold 1, found 0",
    ]


def test_evaluation_value_must_be_finite():
    assert validate(EvaluationRecord(1, 6, 8353, "predictive_accuracy", float("nan"))) == ["value must be finite"]


def test_without_ids_clears_the_whole_tree():
    flow = Flow("ref.p", "1", components=(("learner", Flow("ref.a", "1", id=5)),), id=7)
    bare = without_ids(flow)
    assert bare.id is None and bare.component("learner").id is None


def test_flow_paths():
    inner = Flow("ref.stump", "1", (FlowParameter("max_depth", "1"),))
    flow = Flow("ref.gridsearch", "1", (FlowParameter("grid", ""),), (("inner", inner),))
    assert flow.parameter_paths() == ["grid", "inner.max_depth"]
    owner, param = flow.resolve("inner.max_depth")
    assert owner is inner and param.default_value == "1"


@given(st.dictionaries(st.text(max_size=5), st.floats(allow_nan=False), max_size=6))
def test_map_equality_ignores_insertion_order(qualities):
    reversed_map = dict(reversed(list(qualities.items())))
    a = DatasetDescription("d", qualities=qualities)
    b = DatasetDescription("d", qualities=reversed_map)
    assert a == b and hash(a.name) == hash(b.name)


names = st.from_regex(r"[a-z]{1,4}(\.[a-z]{1,4}){0,2}", fullmatch=True)
flows = st.recursive(
    st.builds(lambda n: Flow(n, "1"), names),
    lambda children: st.builds(
        lambda n, kids: Flow(n, "1", components=tuple((f"r{i}", k) for i, k in enumerate(kids))),
        names,
        st.lists(children, min_size=1, max_size=3),
    ),
    max_leaves=12,
)


@given(flows)
def test_validate_is_pure_and_names_are_total(flow):
    assert validate(flow) == validate(flow) == []
    assert canonical_flow_name(flow) == canonical_flow_name(replace(flow))
