import numpy as np
import pytest

from ncdlab import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compilation happens once here so timed tests measure the algorithms
    kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
