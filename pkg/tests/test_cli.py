import argparse
import json

import pytest

from omlclient import cache as cachemod, cli, codec, protocol, runner
from omlclient.arff import ArffDocument, Attribute, serialize
from omlclient.entities import DatasetDescription
from omlclient.extension.reference import parse_spec


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    for var in cli.ENV_VARS.values():
        monkeypatch.delenv(var, raising=False)
    monkeypatch.setenv("HOME", str(tmp_path / "home"))


@pytest.fixture
def call(server, tmp_path, capsys):
    base = ["--server", server.base_url, "--cachedir", str(tmp_path / "cache"), "--apikey", "test-secret-key"]

    def invoke(*args, base_args=True):
        code = cli.main([*(base if base_args else []), *map(str, args)])
        out, err = capsys.readouterr()
        return code, [json.loads(line) for line in out.splitlines()], err

    return invoke


def test_exit_codes(call):
    code, out, _ = call("tasks", "get", 6)
    assert code == 0 and out[0]["id"] == 6 and out[0]["splits"] == 10
    code, _, err = call("datasets", "get", 999999)
    assert code == 1
    assert json.loads(err) == {"code": 111, "error": "ApiError", "http_status": 412, "message": json.loads(err)["message"]}
    code, _, _ = call("datasets", "frobnicate")
    assert code == 2
    code, _, _ = call("run", "--task", 6, "--suite", "x", "--model", "majority")
    assert code == 2


def test_bad_model_spec_is_a_domain_error(call):
    code, _, err = call("run", "--task", 37, "--model", "forest")
    assert code == 1 and "InvalidModelError" in err


def _args(**kw):
    base = dict(config=None, server=None, apikey=None, cachedir=None, offline=False, workers=1)
    return argparse.Namespace(**(base | kw))


def test_config_precedence(tmp_path):
    conf = tmp_path / "conf"
    conf.write_text("# comment\nserver = http://file/api\napikey = from-file\ncachedir = /file\n")
    env = {"OMLCLIENT_SERVER": "http://env/api", "OMLCLIENT_APIKEY": "from-env"}
    cfg = cli.resolve_config(_args(config=str(conf), server="http://flag/api"), env)
    assert (cfg.server, cfg.apikey, cfg.cachedir) == ("http://flag/api", "from-env", "/file")
    assert cli.resolve_config(_args(config=str(conf)), {}).server == "http://file/api"
    assert cli.resolve_config(_args(config=str(tmp_path / "missing")), {}) == cli.ClientConfig()


def test_bad_config_line(tmp_path):
    conf = tmp_path / "conf"
    conf.write_text("colour = blue\n")
    with pytest.raises(ValueError, match="conf:1"):
        cli.read_config_file(conf)


def test_env_feeds_the_cli(server, call, monkeypatch, tmp_path):
    monkeypatch.setenv("OMLCLIENT_SERVER", server.base_url)
    monkeypatch.setenv("OMLCLIENT_CACHEDIR", str(tmp_path / "envcache"))
    code, out, _ = call("suites", "get", "local-mini", base_args=False)
    assert code == 0 and out[0]["tasks"] == [6, 31, 37]
    assert (tmp_path / "envcache").is_dir()


def test_run_matches_library(call, server_cfg, tmp_path):
    spec = "pipeline:impute.mean,onehot,stump"
    code, out, _ = call("run", "--task", 31, "--model", spec, "--seed", 4, "--out", tmp_path / "out")
    assert code == 0
    cache = cachemod.CacheConfig(tmp_path / "libcache")
    task = protocol.get_entity(server_cfg, "task", 31, cache)
    run = runner.run_model_on_task(parse_spec(spec), task, 4, server_cfg, cache)
    assert out == [{"task": 31, "predictive_accuracy": run.local_evaluations["predictive_accuracy"]}]
    assert (tmp_path / "out" / "task_31.predictions.arff").read_bytes() == runner.predictions_arff_bytes(run, task)
    assert (tmp_path / "out" / "task_31.run.xml").read_bytes() == codec.encode_run(run)


def test_datasets_list_matches_library(call, server_cfg):
    code, out, _ = call("datasets", "list", "--filter", "name=letter")
    assert code == 0 and out == protocol.list_entities(server_cfg, "dataset", {"name": "letter"})
    code, out, _ = call("datasets", "list", "--limit", 2, "--offset", 1)
    assert out == protocol.list_entities(server_cfg, "dataset", {}, (1, 2))


def test_upload_then_get_and_create_task(call, tmp_path):
    doc = ArffDocument(
        "cli-upload",
        (Attribute("x", "numeric"), Attribute("y", "nominal", ("p", "q"))),
        tuple((float(i), "pq"[i % 3 == 0]) for i in range(24)),
    )
    (tmp_path / "d.arff").write_text(serialize(doc))
    (tmp_path / "d.xml").write_bytes(codec.encode(DatasetDescription("cli-upload", default_target_attribute="y")))
    code, out, _ = call("datasets", "upload", "--description", tmp_path / "d.xml", "--data", tmp_path / "d.arff")
    assert code == 0
    new_id = out[0]["id"]
    code, out, _ = call("datasets", "get", new_id)
    assert out[0]["name"] == "cli-upload" and out[0]["rows"] == 24 and out[0]["features"] == ["x", "y"]
    code, out, _ = call("tasks", "create", "--dataset", new_id, "--folds", 4)
    assert code == 0
    code, out, _ = call("tasks", "get", out[0]["id"])
    assert out[0]["dataset_id"] == new_id and out[0]["splits"] == 4 and out[0]["class_labels"] == ["p", "q"]


def test_upload_without_key_fails(call, server, tmp_path):
    (tmp_path / "d.arff").write_text(serialize(ArffDocument("u", (Attribute("x", "numeric"),), ((1.0,),))))
    (tmp_path / "d.xml").write_bytes(codec.encode(DatasetDescription("u")))
    code = cli.main(["--server", server.base_url, "--cachedir", str(tmp_path / "c"), "datasets", "upload",
                     "--description", str(tmp_path / "d.xml"), "--data", str(tmp_path / "d.arff")])
    assert code == 1


def test_cache_clear_and_offline(call, tmp_path):
    assert call("tasks", "get", 37)[0] == 0
    code, out, _ = call("--offline", "tasks", "get", 37)
    assert code == 0
    code, out, _ = call("cache", "clear", "--kind", "task", "--id", 37)
    assert out == [{"removed": 1}]
    code, _, err = call("--offline", "tasks", "get", 37)
    assert code == 1 and "OfflineError" in err


def test_repeat_runs_are_byte_identical(call, tmp_path):
    for name in ("a", "b"):
        assert call("run", "--task", 40, "--model", "nn", "--out", tmp_path / name)[0] == 0
    for f in ("task_40.predictions.arff", "task_40.run.xml"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_evals_export(call, tmp_path):
    out = tmp_path / "e.csv"
    code, lines, _ = call("evals", "export", "--function", "predictive_accuracy", "--flow", 8353, "--task", 6,
                          "--log10", "sklearn.svm.classes.SVC(16)_C", "--log10", "sklearn.svm.classes.SVC(16)_gamma",
                          "--out", out)
    assert code == 0 and lines[0]["rows"] == 50
    assert out.exists() and (tmp_path / "e.csv.svg").exists()
