from __future__ import annotations

import pytest

_CRITERIA: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            number, title = marker.args
            _CRITERIA.setdefault(number, (title, []))


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    results = _CRITERIA.setdefault(number, (title, []))[1]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        results.append("pass" if report.passed else ("skip" if report.skipped else "fail"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, results = _CRITERIA[number]
        if not results:
            status = "NOT RUN"
        elif all(r == "pass" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {title} ({len(results)} checks)")
