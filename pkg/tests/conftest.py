from __future__ import annotations

import pytest

from flowscope.ingest import load_dataset
from flowscope.synth import generate, load_scenario


def _scenario(tmp_path_factory, name):
    d = tmp_path_factory.mktemp(name)
    manifest = generate(load_scenario(name), d)
    return d, manifest


@pytest.fixture(scope="session")
def standard(tmp_path_factory):
    """(directory, manifest, dataset) for the ~1000-block mixed scenario."""
    d, m = _scenario(tmp_path_factory, "standard")
    return d, m, load_dataset(d)


@pytest.fixture(scope="session")
def eof_scenario(tmp_path_factory):
    d, m = _scenario(tmp_path_factory, "eof")
    return d, m


@pytest.fixture(scope="session")
def phase_mix(tmp_path_factory):
    d, m = _scenario(tmp_path_factory, "phase_mix")
    return d, m, load_dataset(d)


@pytest.fixture(scope="session")
def monopoly(tmp_path_factory):
    d, m = _scenario(tmp_path_factory, "monopoly")
    return d, m, load_dataset(d)


# --- acceptance summary ----------------------------------------------------------

_results: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _results.setdefault(number, {"title": title, "passed": 0, "failed": []})
    if report.when == "call" and report.passed:
        entry["passed"] += 1
    elif report.failed:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        e = _results[number]
        status = "FAIL" if e["failed"] or not e["passed"] else "PASS"
        line = f"[{status}] {number}. {e['title']} ({e['passed']} checks passed"
        line += f", failed: {', '.join(e['failed'])})" if e["failed"] else ")"
        terminalreporter.write_line(line)
