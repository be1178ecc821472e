import logging

import pytest

from omlclient import codec, transport
from omlclient.mockserver import default_fixtures, load_errors
from omlclient.transport import ApiError, ServerConfig, TransportError, decode_error


def test_decode_error_from_fixture_documents():
    # every error the server can emit decodes back to its own code
    for name, spec in load_errors(default_fixtures() / "errors.tsv").items():
        err = decode_error(spec.http_status, codec.encode_error(spec.code, spec.message))
        assert (err.code, err.http_status, err.message) == (spec.code, spec.http_status, spec.message), name


def test_decode_error_code_102():
    err = decode_error(401, b"<error><code>102</code><message>Authentication failed</message></error>")
    assert err.code == 102


def test_decode_error_empty_body():
    err = decode_error(500, b"")
    assert (err.code, err.http_status) == (0, 500)


def test_decode_error_html_is_truncated():
    body = b"<html><body>" + b"x" * 500 + b"</body></html>"
    err = decode_error(502, body)
    assert err.code == 0
    assert err.message == body[:200].decode()


def test_server_config_rules():
    with pytest.raises(ValueError):
        ServerConfig("www.example.org/api")
    with pytest.raises(ValueError):
        ServerConfig(retries=11)
    with pytest.raises(ValueError):
        ServerConfig(timeout=0)
    assert ServerConfig("http://h:1/api/").url("/task/6") == "http://h:1/api/task/6"
    assert "secret" not in repr(ServerConfig(api_key="secret"))


def test_backoff_is_deterministic_and_exponential():
    a = transport.backoff_delays("GET x", 4)
    assert a == transport.backoff_delays("GET x", 4)
    assert a != transport.backoff_delays("GET y", 4)
    for i, d in enumerate(a):
        assert 0.1 * 2**i <= d < 0.2 * 2**i


def test_retries_on_5xx(server):
    slept = []
    cfg = ServerConfig(server.base_url, retries=2)
    server.fail_next(2, 503)
    body = transport.get(cfg, "task/6", sleep=slept.append)
    assert codec.decode_task(body).id == 6
    assert server.counts["task/6"] == 3
    assert slept == transport.backoff_delays(f"GET {server.base_url}/task/6", 2)


def test_gives_up_after_retries(server):
    cfg = ServerConfig(server.base_url, retries=1)
    server.fail_next(5, 500)
    with pytest.raises(ApiError) as info:
        transport.get(cfg, "task/6", sleep=lambda s: None)
    assert info.value.http_status == 500 and info.value.code == 0
    assert server.counts["task/6"] == 2


def test_no_retry_on_4xx(server):
    cfg = ServerConfig(server.base_url, retries=3)
    with pytest.raises(ApiError) as info:
        transport.get(cfg, "data/999999", sleep=lambda s: None)
    assert info.value.code == 111
    assert server.total_requests == 1


def test_transport_failure_after_retries():
    cfg = ServerConfig("http://127.0.0.1:9/api", timeout=1, retries=1, api_key="hunter2")
    slept = []
    with pytest.raises(TransportError) as info:
        transport.request(cfg, "POST", cfg.url("flow"), files={"description": b"x"}, authenticated=True, sleep=slept.append)
    assert len(slept) == 1
    assert "hunter2" not in str(info.value)
    assert "***" in str(info.value)


def test_api_key_only_on_mutating_requests(server, caplog):
    cfg = ServerConfig(server.base_url, api_key="s3cret-key")
    with caplog.at_level(logging.DEBUG, logger="omlclient"):
        transport.get(cfg, "task/6")
        with pytest.raises(ApiError) as info:
            transport.request(cfg, "POST", cfg.url("nowhere"), files={"description": b"<x/>"}, authenticated=True)
    assert "s3cret-key" not in caplog.text
    assert "s3cret-key" not in str(info.value) and "s3cret-key" not in info.value.message
    assert "api_key=***" in caplog.text
