import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mixedbn.domain_grid import build_grid, mask_ball, mask_box
from mixedbn.forms import assemble

settings.register_profile("default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def ball9():
    return mask_ball(build_grid(3, 1.5, 9), None, 1.0)


@pytest.fixture(scope="session")
def ball13():
    return mask_ball(build_grid(3, 1.5, 13), None, 1.0)


@pytest.fixture(scope="session")
def forms13(ball13):
    return assemble(ball13, 0.5)


@pytest.fixture(scope="session")
def forms9(ball9):
    return assemble(ball9, 0.5)


@pytest.fixture(scope="session")
def box13():
    return mask_box(build_grid(3, 1.5, 13), [1.0, 1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
