from __future__ import annotations

import pytest

from attest_model.io import fixture_bundle, fixture_execution, ms1
from attest_model.system import AttestationSystem, PcrId


@pytest.fixture(scope="session")
def sys1() -> AttestationSystem:
    return ms1()


@pytest.fixture(scope="session")
def ex(sys1):
    """Loader for bundled execution fixtures."""
    cache = {}

    def load(name: str):
        if name not in cache:
            cache[name] = fixture_execution(name, sys1)
        return cache[name]

    return load


@pytest.fixture(scope="session")
def bundle():
    return fixture_bundle


def chain_system() -> AttestationSystem:
    """rtm measures A, A measures B, one PCR each."""
    pr, pa = PcrId("t", "p_r"), PcrId("t", "p_a")
    return AttestationSystem.build(
        ["rtm", "A", "B"], "rtm", [("rtm", "A"), ("A", "B")], [], [pr, pa], [("rtm", pr), ("A", pa)]
    )


@pytest.fixture(scope="session")
def mini() -> AttestationSystem:
    return chain_system()


# -- acceptance reporting ----------------------------------------------------------

_CRITERIA = pytest.StashKey[list]()
_CLAUSES = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")
    config.stash[_CRITERIA] = []


@pytest.fixture
def clauses(request) -> list:
    """Collects (clause, ok, detail) triples for the criterion line of the running test."""
    found: list = []
    request.node.stash[_CLAUSES] = found
    return found



@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    item.config.stash[_CRITERIA].append(
        (number, title, rep.passed, item.stash.get(_CLAUSES, []), rep.duration)
    )


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(config.stash.get(_CRITERIA, []), key=lambda r: r[0])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, found, duration in rows:
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}  ({duration:.2f} s)")
        for name, ok, detail in found:
            terminalreporter.write_line(f"    {'ok  ' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
