import sys
from functools import lru_cache

import pytest

from gpslab.intersection import intersection_tables
from gpslab.kernel import build_kernel
from gpslab.renewal import renewal_mass


@lru_cache(maxsize=None)
def _kernel(alpha: float):
    return build_kernel(alpha)


@lru_cache(maxsize=None)
def _grid(alpha: float, N: int):
    return renewal_mass(_kernel(alpha), N, N)


@lru_cache(maxsize=None)
def _tables(alpha: float, N: int):
    return intersection_tables(_grid(alpha, N))


class LargeGrids:
    """Session cache of the expensive square grids (one DP per ``(alpha, N)``)."""

    kernel = staticmethod(_kernel)
    grid = staticmethod(_grid)
    tables = staticmethod(_tables)


@pytest.fixture(scope="session")
def large():
    return LargeGrids()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
