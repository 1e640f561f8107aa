import math

import pytest


def is_square(x):
    return math.isqrt(x) ** 2 == x


@pytest.fixture
def squares():
    return is_square


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
