"""Prints one PASS/FAIL line per acceptance criterion after the run."""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[str, tuple[int, str]] = {}
_OUTCOMES: dict[int, list[str]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            _CRITERIA[item.nodeid] = (mark.kwargs["criterion"], mark.kwargs["title"])


def pytest_runtest_logreport(report):
    info = _CRITERIA.get(report.nodeid)
    if info is None:
        return
    outcomes = _OUTCOMES.setdefault(info[0], [])
    if report.failed:
        outcomes.append("FAIL")
    elif report.when == "call":
        outcomes.append("SKIP" if report.skipped else "PASS")
    elif report.skipped:
        outcomes.append("SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    titles = {}
    for crit, title in _CRITERIA.values():
        titles.setdefault(crit, title)
    terminalreporter.section("acceptance criteria")
    for crit in sorted(titles):
        outcomes = _OUTCOMES.get(crit, [])
        if not outcomes:
            status = "NOT RUN"
        elif "FAIL" in outcomes:
            status = "FAIL"
        elif all(o == "PASS" for o in outcomes):
            status = "PASS"
        else:
            status = "SKIP"
        terminalreporter.write_line(f"AC{crit} {status:7} {titles[crit]}")
