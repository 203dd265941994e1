import numpy as np
import pytest

from gradsched import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # Compile the jitted kernels once up front so timed tests never pay for it.
    kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
