"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

from collections import OrderedDict

import pytest

_ACCEPTANCE = OrderedDict()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0]
    failed = report.failed or (report.when == "call" and report.skipped)
    if report.when == "call" or failed:
        _ACCEPTANCE[label] = _ACCEPTANCE.get(label, True) and not failed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: int(s[1:])):
        terminalreporter.write_line(f"{label}: {'PASS' if _ACCEPTANCE[label] else 'FAIL'}")
