"""Shared fixtures and the acceptance report.

Tests marked ``@pytest.mark.criterion("name")`` are grouped by name; after the
run one PASS/FAIL line per criterion is printed, followed by any ``detail`` or
``note`` properties the tests recorded.
"""

from __future__ import annotations

import sys
from collections import OrderedDict
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: "OrderedDict[str, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test checks")


def pytest_collection_modifyitems(config, items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            _criteria.setdefault(marker.args[0], {"outcomes": [], "details": [], "notes": []})


def pytest_runtest_logreport(report):
    name = _criterion_of(report)
    if name is None:
        return
    entry = _criteria.setdefault(name, {"outcomes": [], "details": [], "notes": []})
    if report.when == "call" or report.outcome == "failed" or report.skipped:
        entry["outcomes"].append(report.outcome)
    if report.when == "call":
        for key, value in report.user_properties:
            if key == "detail":
                entry["details"].append(str(value))
            elif key == "note":
                entry["notes"].append(str(value))


def _criterion_of(report):
    for key, value in report.user_properties:
        if key == "criterion":
            return value
    return None


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, entry in _criteria.items():
        outcomes = entry["outcomes"]
        if not outcomes:
            status = "NOT RUN"
        elif any(o == "failed" for o in outcomes):
            status = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        details = "; ".join(entry["details"])
        tr.write_line(f"{status:4} {name}" + (f" :: {details}" if details else ""))
        for note in entry["notes"]:
            tr.write_line(f"     note: {note}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
