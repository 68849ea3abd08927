import pytest
from hypothesis import strategies as st

from covering_lab.geometry import Box3


@st.composite
def boxes(draw, lo=0, hi=32):
    bounds = []
    for _ in range(3):
        a = draw(st.integers(lo, hi - 1))
        b = draw(st.integers(a + 1, hi))
        bounds.append((a, b))
    return Box3.from_bounds(*bounds)


@pytest.fixture
def B():
    return Box3.from_bounds


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
