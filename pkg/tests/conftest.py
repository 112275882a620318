import numpy as np
import pytest

from thinfilm import FilmState, Grid1D, derive_params


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid64():
    return Grid1D(1.0, 64)


@pytest.fixture
def params15():
    return derive_params(alpha=1.5)


def cosine_state(grid, c0=1.0, c1=0.5, k=1, t=0.0):
    x = grid.nodes
    return FilmState(t, c0 + c1 * np.cos(k * np.pi * x / grid.half_length))


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """``acceptance(number, title, passed, detail)`` logs one criterion result."""

    def log(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
