import numpy as np
import pytest

from dtcfloquet.meanfield import SpinState, find_attractor
from dtcfloquet.model import ModelParams


@pytest.fixture(scope="session")
def fig1():
    """Base parameters of the limit-cycle example: g1/g0 = 0.6, omega = 2 omega_res."""
    return ModelParams.from_ratios(0.5, 0.6, 1.0)


@pytest.fixture(scope="session")
def fig1_cycle(fig1):
    return find_attractor(fig1, SpinState.tilted(fig1.n_atoms))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
