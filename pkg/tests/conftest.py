import numpy as np
import pytest

from deadcore.energy import Problem
from deadcore.grid import BumpWeight, GridSpec, build_grid, detect_components, make_weight

REFERENCE_N = 513
REFERENCE_OFFSET = 0.3


@pytest.fixture(scope="session")
def ref_grid():
    return build_grid(GridSpec(1, 1.0, REFERENCE_N))


@pytest.fixture(scope="session")
def ref_weight(ref_grid):
    return make_weight(ref_grid, BumpWeight(offset=REFERENCE_OFFSET))


@pytest.fixture(scope="session")
def ref_comps(ref_grid, ref_weight):
    return detect_components(ref_grid, ref_weight[0])


@pytest.fixture(scope="session")
def ref_model(ref_grid, ref_weight):
    """Factory for problems on the reference instance."""

    def make(p=2.0, q=1.5, mu=1.0, **kw):
        _, a_plus, a_minus = ref_weight
        return Problem(ref_grid, a_plus, a_minus, p=p, q=q, mu=mu, **kw)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
