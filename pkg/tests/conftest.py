from __future__ import annotations

import time
from contextlib import contextmanager
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from snippet_forge.errors import ToolMissing
from snippet_forge.kb import build_index
from snippet_forge.validator import JavaToolchain

FIXTURES = Path(__file__).parent / "fixtures"
JARS = FIXTURES / "jars"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE: list[str] = []


def _toolchain():
    try:
        return JavaToolchain.discover()
    except ToolMissing:
        return None


def pytest_collection_modifyitems(config, items):
    if any("java" in item.keywords for item in items) and _toolchain() is None:
        skip = pytest.mark.skip(reason="no Java compiler or JVM available")
        for item in items:
            if "java" in item.keywords:
                item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Context manager that records one PASS/FAIL line per acceptance criterion."""

    @contextmanager
    def run(number: int, title: str):
        start = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            line = f"[criterion {number}] FAIL  {title} ({time.perf_counter() - start:.2f}s): {exc!r:.200}"
            print(line)
            _ACCEPTANCE.append(line)
            raise
        line = f"[criterion {number}] PASS  {title} ({time.perf_counter() - start:.2f}s)"
        print(line)
        _ACCEPTANCE.append(line)

    return run


@pytest.fixture(scope="session")
def java_toolchain() -> JavaToolchain:
    tc = _toolchain()
    if tc is None:
        pytest.skip("no Java compiler or JVM available")
    return tc


@pytest.fixture(scope="session")
def fixture_kb():
    idx, errors = build_index(sorted(JARS.resolve().glob("*.jar")))
    assert not errors
    return idx
