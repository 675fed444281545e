import numpy as np
import pytest
from hypothesis import settings

from dbscoop.scenario import default_scenario


# numba compiles on first use; keep hypothesis from timing that
settings.register_profile("dbscoop", deadline=None, max_examples=50)
settings.load_profile("dbscoop")


@pytest.fixture
def scenario():
    return default_scenario(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
