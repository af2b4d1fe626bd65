import numpy as np
import pytest

from deltasolve.closedform import propagate_solution
from deltasolve.core import Grid, InteractionSet, PolynomialPotential, Problem, ZeroPotential
from deltasolve.kernels import exact_kernel_q0
from deltasolve.nsbf import fl_coeffs_direct, fl_coeffs_recursive
from deltasolve.oracle import OracleConfig, project_fl_bruteforce, rk_regular, rk_shoot
from deltasolve.spps import formal_powers, nonvanishing_solution


def test_config_validation():
    with pytest.raises(ValueError):
        OracleConfig(substeps=2)
    with pytest.raises(ValueError):
        OracleConfig(order=5)


def test_cosine_with_few_substeps():
    g = Grid(1.0, 200)
    ys, dys = rk_regular(ZeroPotential(), g, 4.0, 1.0, 0.0, config=OracleConfig(substeps=16))
    assert np.max(np.abs(ys - np.cos(2 * g.x))) <= 1e-10
    assert np.max(np.abs(dys + 2 * np.sin(2 * g.x))) <= 1e-10


def test_linear_growth_after_jump(j1):
    u = rk_shoot(j1.potential, j1.iset, 0.0, 1.0, 0.0)
    # RK4 is exact on linear pieces; only rounding over 64000 steps remains
    assert abs(u.u[-1] - 2.0) < 1e-10
    i = j1.grid.nodes[0]
    assert abs(u.du_left[i]) < 1e-12 and abs(u.du[i] - 2.0) < 1e-12


def test_agrees_with_propagation(rng):
    for _ in range(6):
        N = int(rng.integers(1, 5))
        pts = tuple(np.sort(rng.choice(np.arange(1, 20), N, replace=False)) / 20)
        als = tuple(rng.uniform(-3, 3, N))
        P = Problem(InteractionSet(pts, als, 1.0), PolynomialPotential(rng.uniform(-2, 2, 3)), 1000)
        rho = complex(rng.uniform(0, 10), rng.uniform(-1, 1))
        a = rk_shoot(P.potential, P.iset, rho * rho, 1.0, 1j * rho, grid=P.grid)
        b = propagate_solution(P, P.iset, rho, 1.0, 1j * rho)
        assert np.max(np.abs(a.u - b.u)) < 1e-8
        assert np.max(np.abs(a.du - b.du)) < 1e-8 * max(1.0, abs(rho))
        for i in P.grid.nodes:
            assert abs(a.du_left[i] - b.du_left[i]) < 1e-8 * max(1.0, abs(rho))


def test_fourth_order_convergence():
    g = Grid(1.0, 50)
    q = PolynomialPotential([0.0, 1.0])
    ref, _ = rk_regular(q, g, 30.0, 1.0, 0.0, config=OracleConfig(substeps=64))
    err = [np.max(np.abs(rk_regular(q, g, 30.0, 1.0, 0.0, config=OracleConfig(substeps=S))[0] - ref))
           for S in (4, 8)]
    assert 8 <= err[0] / err[1] <= 32


def test_projection_zero_kernel():
    K = exact_kernel_q0(InteractionSet((), (), 1.0), 1.0)
    assert np.all(project_fl_bruteforce(K, 1.0, 10) == 0)


def test_projection_a0(j1):
    # a_0 = (e(0, x) - 1)/2 and e(0, x) = 1 + 2 (x - 1/2) past the interaction
    for x in [0.3, 0.6, 0.85, 1.0]:
        a = project_fl_bruteforce(exact_kernel_q0(j1.iset, x), x, 4)
        assert abs(a[0] - max(x - 0.5, 0.0)) < 1e-14


@pytest.fixture(scope="module")
def direct_j2(j2):
    nv = nonvanishing_solution(j2.q, j2.iset, grid=j2.grid)
    return fl_coeffs_direct(formal_powers(nv, 30), 30)


def test_projection_matches_direct(j2, direct_j2):
    for x in [0.4, 0.8, 1.0]:
        a = project_fl_bruteforce(exact_kernel_q0(j2.iset, x), x, 30)
        assert np.max(np.abs(a[:21] - direct_j2.at(x)[:21])) < 1e-9


@pytest.mark.xfail(strict=True, reason="direct formula amplifies 1e-18 moment rounding by ~1e12 at n = 30")
def test_projection_matches_direct_to_n30(j2, direct_j2):
    a = project_fl_bruteforce(exact_kernel_q0(j2.iset, 1.0), 1.0, 30)
    assert np.max(np.abs(a - direct_j2.at(1.0))) < 1e-9


def test_projection_matches_recursive_to_n30(j2):
    nv = nonvanishing_solution(j2.q, j2.iset, grid=j2.grid)
    co = fl_coeffs_recursive(nv, 30)
    for x in [0.4, 0.8, 1.0]:
        a = project_fl_bruteforce(exact_kernel_q0(j2.iset, x), x, 30)
        assert np.max(np.abs(a - co.at(x))) < 1e-9
