import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nsasym.expansion import extract_expansion
from nsasym.modes import enumerate_modes
from nsasym.solver import continue_branch, sinusoidal_force

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def ms3():
    return enumerate_modes(3, 9)


@pytest.fixture(scope="session")
def ms2():
    return enumerate_modes(2, 9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sinusoidal_branch(ms3):
    """The alpha = 1 .. 2e5 branch for the sinusoidal forcing, computed once."""
    mf = sinusoidal_force(ms3)
    return continue_branch(mf.g, 1.0, 2e5, v_start=mf.v_start)


@pytest.fixture(scope="session")
def sinusoidal_expansion(sinusoidal_branch):
    run = sinusoidal_branch
    return extract_expansion(run.fields, 2, alphas=run.alphas)
