import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pxlap.domain import ExponentField, build_grid

settings.register_profile(
    "pxlap", deadline=None, derandomize=True, print_blob=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("pxlap")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Record one acceptance line; printed live and again in the terminal summary."""
    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def grid1():
    return build_grid(1, 65)


@pytest.fixture
def grid2():
    return build_grid(2, 17)


def const_p(grid, value, kind="laplacian"):
    return ExponentField.constant(grid, value, kind)


def rng(seed=0):
    return np.random.default_rng(seed)
