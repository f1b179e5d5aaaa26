import numpy as np
import pytest

from pardiff.models import make_barotropic_ns, make_heat, make_mhd, make_toy1d


@pytest.fixture(scope="session")
def toy():
    return make_toy1d()


@pytest.fixture(scope="session")
def toy_decoupled():
    return make_toy1d([[0.0, 0.0], [0.0, 0.0]])


@pytest.fixture(scope="session")
def ns2():
    return make_barotropic_ns(d=2)


@pytest.fixture(scope="session")
def mhd():
    return make_mhd()


@pytest.fixture(scope="session")
def heat():
    return make_heat()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
