"""Shared fixtures plus the acceptance-criterion summary.

Tests marked ``@pytest.mark.acceptance(n, "title")`` are grouped by
criterion; the terminal summary prints one PASS/FAIL line per criterion,
with any values a test recorded via ``record_property("measured", ...)``.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

_criteria: dict[int, dict] = {}


@pytest.fixture
def configs_dir() -> Path:
    return CONFIGS


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is None:
            continue
        number, title = mark.args
        entry = _criteria.setdefault(number, {"title": title, "outcomes": []})
        item.user_properties.append(("acceptance", number))
        entry.setdefault("nodes", []).append(item.nodeid)


def pytest_runtest_logreport(report):
    number = dict(report.user_properties).get("acceptance")
    if number is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[number]["outcomes"].append(report.outcome)
        for key, value in report.user_properties:
            if key == "measured":
                _criteria[number].setdefault("measured", []).append(str(value))


def pytest_terminal_summary(terminalreporter):
    ran = {n: e for n, e in _criteria.items() if e["outcomes"]}
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ran):
        e = ran[n]
        outcomes = e["outcomes"]
        if any(o == "failed" for o in outcomes):
            verdict = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        line = f"criterion {n:>2} {verdict}  {e['title']}"
        if e.get("measured"):
            line += "  [" + "; ".join(e["measured"]) + "]"
        terminalreporter.write_line(line)
