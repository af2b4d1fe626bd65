import math

import numpy as np
import pytest

from deltasolve.core import InteractionSet, PolynomialPotential, Problem, ZeroPotential
from deltasolve.spectral import (
    BoundaryConditions,
    CharacteristicFunction,
    characteristic_function,
    eigenfunction,
    find_eigenvalues,
)

# Dirichlet roots of sin(r)/r + 2 sin(r/2)^2/r^2 on [0, 1], mpmath at 20 digits
J1_DIRICHLET = [13.492357146504842251, 39.478417604357434475, 92.769348921422847515,
                157.9136704174297379, 250.71889284712158764]

# q = x, {(0.25, 1), (0.75, -2)}, y(0) + 0.5 y'(0) = 0, y(1) - 0.3 y'(1) = 0;
# mpmath roots of the Airy-function characteristic determinant
ROBIN = [-13.176342902856361143, -0.88054096748416807822, 28.865911095284345871,
         76.547641318848935687, 145.87178252195882036, 236.08116424466156453]


@pytest.fixture(scope="module")
def robin():
    P = Problem(InteractionSet((0.25, 0.75), (1.0, -2.0), 1.0), PolynomialPotential([0.0, 1.0]))
    return P, BoundaryConditions(1.0, 0.5, 1.0, -0.3)


def test_bc_validation():
    with pytest.raises(ValueError):
        BoundaryConditions(0.0, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        BoundaryConditions(1.0, 0.0, 0.0, 0.0)
    assert BoundaryConditions.dirichlet().initial_data == (-0.0, 1.0)
    assert BoundaryConditions.neumann().initial_data == (-1.0, 0.0)


def test_unknown_backend(j1):
    with pytest.raises(ValueError):
        CharacteristicFunction(j1, backend="fem")


def test_free_dirichlet_squares():
    P = Problem(InteractionSet((), (), math.pi), ZeroPotential())
    sp = find_eigenvalues(P, (0.5, 110.0))
    n = np.arange(1, 11)
    assert len(sp) == 10
    assert np.max(np.abs(sp.eigenvalues - n**2) / n**2) < 1e-9


def test_free_neumann_includes_zero():
    P = Problem(InteractionSet((), (), math.pi), ZeroPotential())
    sp = find_eigenvalues(P, (-1.0, 10.0), bc=BoundaryConditions.neumann())
    assert np.allclose(sp.eigenvalues, [0, 1, 4, 9], atol=1e-9)


def test_delta_matches_closed_form(j1):
    D = CharacteristicFunction(j1)
    for r in [0.7, 3.1, 9.4, 2.0 + 0.5j]:
        ref = np.sin(r) / r + 2 * np.sin(r / 2) ** 2 / r**2
        assert abs(D.at_rho(r) - ref) < 1e-10
    assert abs(characteristic_function(j1, -4.0) - (np.sinh(2) / 2 + 2 * np.sinh(1) ** 2 / 4)) < 1e-10


def test_nsbf_delta_matches_propagation(j2):
    Dp = CharacteristicFunction(j2)
    Dn = CharacteristicFunction(j2, backend="nsbf")
    for lam in np.linspace(-20, 300, 17):
        assert abs(Dn(lam) - Dp(lam)) < 1e-8


def test_j1_dirichlet_eigenvalues(j1):
    for backend in ("propagation", "nsbf", "oracle"):
        sp = find_eigenvalues(j1, (1.0, 260.0), 5, backend=backend)
        assert sp.backend == backend
        assert np.max(np.abs(sp.eigenvalues - J1_DIRICHLET) / J1_DIRICHLET) < 1e-7


def test_attractive_interaction_lowers_ground_state():
    P = Problem(InteractionSet((0.5,), (-2.0,), 1.0), ZeroPotential())
    lam1 = find_eigenvalues(P, (0.0, 30.0), 1).eigenvalues[0]
    assert lam1 < math.pi**2
    assert abs(lam1 - 5.4341315058465565509) < 1e-9


@pytest.mark.parametrize("backend", ["propagation", "nsbf", "oracle"])
def test_robin_with_negative_eigenvalues(robin, backend):
    P, bc = robin
    sp = find_eigenvalues(P, (-40.0, 250.0), bc=bc, backend=backend)
    assert np.max(np.abs(sp.eigenvalues - ROBIN) / np.abs(ROBIN)) < 1e-7
    assert [e.rho.imag > 0 for e in sp.eigenpairs] == [True, True, False, False, False, False]


def test_count_target_and_empty_range(j1):
    assert len(find_eigenvalues(j1, (1.0, 260.0), 2)) == 2
    assert len(find_eigenvalues(j1, (1.0, 10.0))) == 0
    with pytest.raises(ValueError):
        find_eigenvalues(j1, (5.0, 1.0))


def test_complex_data_rejected():
    P = Problem(InteractionSet((0.5,), (1.0 + 1j,), 1.0), ZeroPotential())
    with pytest.raises(ValueError):
        find_eigenvalues(P, (0.0, 10.0))


def test_eigenfunction_boundary_values(robin):
    P, bc = robin
    u = eigenfunction(P, ROBIN[2], bc)
    assert abs(bc.beta0 * u.u[0] + bc.beta1 * u.du[0]) < 1e-14
    assert abs(bc.gamma0 * u.u[-1] + bc.gamma1 * u.du[-1]) < 1e-7 * np.max(np.abs(u.u))
