import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

import verdicts  # noqa: E402


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not verdicts.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in verdicts.lines():
        terminalreporter.write_line(line)
