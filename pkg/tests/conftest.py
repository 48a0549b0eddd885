import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from focalridge.core import ResidualizedDesign  # noqa: E402


@pytest.fixture
def hand_design():
    """Four rows solvable by hand: X'X = [[3, 2], [2, 2]], X'y = [6, 5]."""
    return ResidualizedDesign(
        y_tilde=[3.0, 1.0, 2.0, 0.0],
        focal_tilde=[1.0, 1.0, 1.0, 0.0],
        treat_tilde=[[1.0], [0.0], [1.0], [0.0]],
        treatment_names=("D1",),
        learner="raw",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_criteria: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number = int(name.split("_")[2])
        label = " ".join(name.split("_")[3:])
        _criteria[number] = ("PASS" if report.outcome == "passed" else "FAIL", label)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, label = _criteria[number]
        terminalreporter.write_line(f"{status} criterion {number}: {label}")
