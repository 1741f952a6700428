"""Prints one PASS/FAIL line per acceptance criterion after the run.

Tests opt in with ``@pytest.mark.criterion("name")`` and may attach a
short measurement via ``record_property("detail", ...)``.
"""

import time

import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): test that decides one acceptance criterion")


def _timed(phase):
    @pytest.hookimpl(hookwrapper=True)
    def hook(item):
        start = time.perf_counter()
        yield
        item.user_properties.append((phase, time.perf_counter() - start))

    return hook


# fixture setup counts: shared training runs happen there
pytest_runtest_setup = _timed("setup_seconds")
pytest_runtest_call = _timed("call_seconds")


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = dict(report.user_properties)
        secs = props.get("setup_seconds", 0.0) + props.get("call_seconds", 0.0)
        _results[marker] = (report.outcome, props.get("detail", ""), secs)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep._criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, (outcome, detail, secs) in _results.items():
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name} [{secs:.1f}s]  {detail}".rstrip())
