import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from powersched.presets import paper_attack, paper_channel, paper_model, scalar_model

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def model():
    return paper_model()


@pytest.fixture(scope="session")
def ch():
    return paper_channel()


@pytest.fixture(scope="session")
def dist():
    return paper_attack()


@pytest.fixture(scope="session")
def smodel():
    return scalar_model()


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
