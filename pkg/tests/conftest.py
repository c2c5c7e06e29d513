import pathlib
import re

import pytest

from deltapoe import model

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"

_CRITERION = re.compile(r"test_criterion_(\d+)")
_acceptance_results: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    match = _CRITERION.search(report.nodeid)
    if match:
        number = int(match.group(1))
        outcome = "PASS" if report.passed else "FAIL"
        _acceptance_results[number] = (outcome, report.nodeid.split("::")[-1])


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance_results):
        outcome, name = _acceptance_results[number]
        terminalreporter.write_line(f"criterion {number}: {outcome}  ({name})")


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def make_devenv():
    """OldAPI controls api.call and observes build.run; Docs observes api.call."""
    old_api = model.Domain(
        "OldAPI",
        description="v1 endpoints",
        observed=frozenset({"build.run"}),
        controlled=frozenset({"api.call"}),
    )
    docs = model.Domain(
        "Docs",
        description="developer docs",
        observed=frozenset({"api.call"}),
    )
    return model.Environment((old_api, docs))


@pytest.fixture
def devenv():
    return make_devenv()


def make_chain_env():
    """C controls c (gaining link y -> c); D observes c with c -> d;
    E observes d with d -> f."""
    c = model.Domain(
        "C",
        observed=frozenset({"y"}),
        controlled=frozenset({"c"}),
    )
    d = model.Domain(
        "D",
        observed=frozenset({"c"}),
        controlled=frozenset({"d"}),
        links=frozenset({model.CausalLink("c", "d", "D")}),
    )
    e = model.Domain(
        "E",
        observed=frozenset({"d"}),
        controlled=frozenset({"f"}),
        links=frozenset({model.CausalLink("d", "f", "E")}),
    )
    return model.Environment((c, d, e))


@pytest.fixture
def chain_env():
    return make_chain_env()
