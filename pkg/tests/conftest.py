import numpy as np
import pytest

from elastic_imaging.grid import make_grid, paper_grid

# (criterion, passed, detail) rows collected by the acceptance suite
ACCEPTANCE = []


@pytest.fixture(scope="session")
def ref_grid():
    return paper_grid()


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(4.0, 64, 2.0, 16, 1.0, 1.0, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}")
