from __future__ import annotations

import pytest

from omlclient.cache import CacheConfig
from omlclient.mockserver import MockServer
from omlclient.transport import ServerConfig

API_KEY = "test-secret-key"

_criteria: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.fixture
def server():
    with MockServer() as srv:
        yield srv


@pytest.fixture
def server_cfg(server) -> ServerConfig:
    return ServerConfig(server.base_url, api_key=API_KEY)


@pytest.fixture
def anon_cfg(server) -> ServerConfig:
    return ServerConfig(server.base_url)


@pytest.fixture
def cache_cfg(tmp_path) -> CacheConfig:
    return CacheConfig(tmp_path / "cache")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    number, title = marker.args
    _criteria.setdefault(number, (title, []))[1].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcomes = _criteria[number]
        ok = outcomes and all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
