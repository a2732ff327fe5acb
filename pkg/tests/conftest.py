import pytest
from hypothesis import settings

from besselspdc.fields import GridSpec

settings.register_profile("repo", derandomize=True, deadline=None, max_examples=60)
settings.load_profile("repo")

W0 = 0.5
W1 = 0.23


@pytest.fixture(scope="session")
def grid():
    return GridSpec(1024, 4.0)


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(256, 4.0)
