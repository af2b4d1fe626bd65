import numpy as np
import pytest

from deltasolve.core import InteractionSet, PolynomialPotential, Problem, ZeroPotential


@pytest.fixture(scope="session")
def j1():
    """q = 0 with one interaction of strength 2 at the midpoint of [0, 1]."""
    return Problem(InteractionSet((0.5,), (2.0,), 1.0), ZeroPotential())


@pytest.fixture(scope="session")
def j2():
    return Problem(InteractionSet((0.25, 0.75), (1.0, 2.0), 1.0), ZeroPotential())


@pytest.fixture(scope="session")
def j2x():
    """Two interactions and q(x) = x."""
    return Problem(InteractionSet((0.25, 0.75), (1.0, 2.0), 1.0), PolynomialPotential([0.0, 1.0]))


@pytest.fixture(scope="session")
def free():
    return Problem(InteractionSet((), (), 1.0), ZeroPotential())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
