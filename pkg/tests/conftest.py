import math
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from covmag import gates  # noqa: E402


@pytest.fixture
def spec():
    return gates.CouplingSpec.from_frequency(183e3)


@pytest.fixture
def long_gate_spec():
    return gates.CouplingSpec(math.pi / 2.732e-6)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
