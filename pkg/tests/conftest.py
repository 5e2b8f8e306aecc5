import numpy as np
import pytest

from lieform import catalog
from lieform.fields import Grid


@pytest.fixture(scope="session")
def enneper_grid():
    return Grid.square(0.5, 1.5, 33)


@pytest.fixture(scope="session")
def enneper33(enneper_grid):
    return catalog.enneper(enneper_grid)


@pytest.fixture(scope="session")
def flat0_grid():
    return Grid.square(0.5, 1.5, 33)


@pytest.fixture(scope="session")
def flat0(flat0_grid):
    """c = 0, lambda = u, mu = v with the closed-form (A, B) = (u(u+v), v(u+v))."""
    spec = catalog.FlatWebSpec(0.0, "u", "v", "u*(u+v)", "v*(u+v)")
    return catalog.flatweb(spec, flat0_grid)


def order(coarse, fine):
    """Observed convergence order from errors on h and h/2."""
    return float(np.log2(coarse / fine))
