import numpy as np
import pytest

from finslerkit.distance import distance
from finslerkit.geodesics import exponential
from finslerkit.metrics import hyperbolic_half_plane


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # The first call into each kernel entry point pays JIT compilation in
    # numba mode.  Warm them once so wall-time assertions elsewhere see
    # steady-state numbers.
    m = hyperbolic_half_plane(2)
    exponential(m, [0.0, 1.0], [0.0, 0.1])
    distance(m, [0.0, 1.0], [0.1, 1.1])
    yield


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
