import shutil
import urllib.error
import urllib.request
from dataclasses import replace

import pytest

from omlclient import arff, codec, protocol, runner, transport
from omlclient.entities import Flow, FlowParameter, without_ids
from omlclient.extension import model_to_flow
from omlclient.extension import reference as ref
from omlclient.mockserver import FIRST_UPLOAD_ID, FixtureError, MockServer, default_fixtures
from omlclient.predictions import predictions_document


def test_request_counts(server, server_cfg):
    protocol.get_entity(server_cfg, "task", 6)
    assert server.counts["task/6"] == 1
    assert server.total_requests == 1
    server.reset_counts()
    assert server.total_requests == 0


def test_unknown_route(server):
    with pytest.raises(urllib.error.HTTPError) as info:
        urllib.request.urlopen(f"{server.base_url}/teapot/1")
    err = transport.decode_error(info.value.code, info.value.read())
    assert (err.code, err.http_status) == (0, 404)


@pytest.fixture
def local_run(server_cfg, cache_cfg):
    task = protocol.get_entity(server_cfg, "task", 40, cache_cfg)
    run = runner.run_model_on_task(ref.majority(), task, server=server_cfg, cache=cache_cfg)
    flow_id = protocol.publish_entity(server_cfg, run.flow)
    return task, replace(run, flow_id=flow_id)


def test_valid_run_is_accepted(server_cfg, local_run):
    task, run = local_run
    run_id = protocol.publish_entity(server_cfg, run, {"predictions": runner.predictions_arff_bytes(run, task)})
    assert run_id >= FIRST_UPLOAD_ID
    records = protocol.fetch_evaluations(server_cfg, "predictive_accuracy", tasks=[40], flows=[run.flow_id])
    assert [r.value for r in records if r.run_id == run_id] == [run.local_evaluations["predictive_accuracy"]]


def test_confidences_must_sum_to_one(server_cfg, local_run):
    task, run = local_run
    squeezed = [replace(p, confidences=tuple(c * 0.9 for c in p.confidences)) for p in run.predictions]
    blob = arff.serialize(predictions_document(squeezed, task.class_labels)).encode()
    with pytest.raises(protocol.ApiError) as info:
        protocol.publish_entity(server_cfg, run, {"predictions": blob})
    assert info.value.code == 203


def test_missing_rows_are_rejected(server_cfg, local_run):
    task, run = local_run
    blob = arff.serialize(predictions_document(run.predictions[1:], task.class_labels)).encode()
    with pytest.raises(protocol.ApiError) as info:
        protocol.publish_entity(server_cfg, run, {"predictions": blob})
    assert info.value.code == 203


def test_misreported_accuracy_is_rejected(server_cfg, local_run):
    task, run = local_run
    liar = replace(run, local_evaluations={"predictive_accuracy": 1.0})
    with pytest.raises(protocol.ApiError) as info:
        protocol.publish_entity(server_cfg, liar, {"predictions": runner.predictions_arff_bytes(run, task)})
    assert info.value.code == 203


def test_flow_dedup_keys_on_name_and_version(server_cfg):
    flow = model_to_flow(ref.pipeline(ref.impute_mean(), ref.stump()))
    a = protocol.publish_entity(server_cfg, flow)
    b = protocol.publish_entity(server_cfg, replace(flow, dependencies="numpy>=1.22"))
    assert a == b
    stored = protocol.get_entity(server_cfg, "flow", a)
    assert without_ids(stored) == flow
    assert all(child.id for _, child in stored.components)


def test_foreign_flow_can_be_stored(server_cfg):
    # the server accepts any well-formed flow, not just the reference learners
    flow = Flow("weka.classifiers.trees.J48", "Weka_3.9", (FlowParameter("C", "0.25"),))
    fid = protocol.publish_entity(server_cfg, flow)
    assert without_ids(protocol.get_entity(server_cfg, "flow", fid)) == flow


def test_fixture_flow_ids_are_stable(server_cfg):
    pipe = protocol.get_entity(server_cfg, "flow", 8353)
    assert dict((role, c.id) for role, c in pipe.components) == {"imputation": 14, "classifier": 16}


@pytest.mark.parametrize("damage", ["payload", "task", "suite"])
def test_inconsistent_fixtures_fail_fast(tmp_path, damage):
    root = tmp_path / "fx"
    shutil.copytree(default_fixtures(), root)
    if damage == "payload":
        path = root / "dataset" / "2" / "payload.arff"
        path.write_bytes(path.read_bytes() + b"\n")
    elif damage == "task":
        shutil.rmtree(root / "dataset" / "37")
    else:
        path = next((root / "study").glob("*/description.xml"))
        suite = codec.decode_suite(path.read_bytes())
        path.write_bytes(codec.encode(replace(suite, task_ids=suite.task_ids + (424242,))))
    with pytest.raises(FixtureError):
        MockServer(root)


def test_uploads_are_not_persisted(server_cfg):
    flow = Flow("ref.majority", "ephemeral==1")
    protocol.publish_entity(server_cfg, flow)
    with MockServer() as fresh:
        listing = protocol.list_entities(transport.ServerConfig(fresh.base_url), "flow")
        assert all(item["id"] < FIRST_UPLOAD_ID for item in listing)
