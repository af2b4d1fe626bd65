import numpy as np
import pytest

from deltasolve.closedform import c_solution, s_solution
from deltasolve.core import Grid, GridFunction, InteractionSet, PolynomialPotential, Problem, ZeroPotential
from deltasolve.spps import (
    NonVanishingError,
    formal_powers,
    nonvanishing_solution,
    polya_right_inverse,
    recursive_integrals,
    spps_solution,
    y0_solution,
)


def _free_nv(M=1000):
    iset = InteractionSet((), (), 1.0)
    g = Grid.for_interactions(iset, M)
    return nonvanishing_solution(np.zeros(M + 1), iset, grid=g)


def test_recursive_integrals_f_one():
    g = Grid(1.0, 1000)
    Xt, X = recursive_integrals(np.ones(1001), 10, g)
    for k in range(11):
        assert np.max(np.abs(Xt[k] - g.x**k)) < 1e-10
        assert np.max(np.abs(X[k] - g.x**k)) < 1e-10


def test_recursive_integrals_one_plus_x():
    g = Grid(1.0, 1000)
    _, X = recursive_integrals(1 + g.x, 1, g)
    assert np.max(np.abs(X[1] - g.x / (1 + g.x))) < 1e-9


def test_recursive_integral_majorant(j2x):
    nv = nonvanishing_solution(j2x.q, j2x.iset, grid=j2x.grid)
    tab = formal_powers(nv, 30)
    for k in range(31):
        assert np.max(np.abs(tab.x_pow[k])) <= tab.m1**k * j2x.b**k * (1 + 1e-12)
        assert np.max(np.abs(tab.xtilde[k])) <= tab.m1**k * j2x.b**k * (1 + 1e-12)


def test_formal_powers_unperturbed():
    tab = formal_powers(_free_nv(), 12)
    x = tab.grid.x
    for k in range(13):
        assert np.max(np.abs(tab.phi[k] - x**k)) < 1e-12


def test_formal_powers_vanish_at_zero(j2x):
    nv = nonvanishing_solution(j2x.q, j2x.iset, grid=j2x.grid)
    tab = formal_powers(nv, 20)
    assert tab.phi[0][0] == 1
    assert np.all(tab.phi[1:, 0] == 0)


def test_formal_power_asymptotics(j2x):
    nv = nonvanishing_solution(j2x.q, j2x.iset, grid=j2x.grid)
    tab = formal_powers(nv, 10)
    x = tab.grid.x[1:6]
    for k in (1, 2, 3):
        ratio = np.abs(tab.phi[k][1:6] / x**k - 1)
        assert np.all(ratio < 1e-3)
        assert ratio[0] <= ratio[-1]


def test_phi_derivative_identity(j2x):
    nv = nonvanishing_solution(j2x.q, j2x.iset, grid=j2x.grid)
    tab = formal_powers(nv, 8)
    ld, _ = tab.log_derivative
    h = tab.grid.h
    for k in range(1, 8):
        phi = tab.phi64[k]
        # fourth-order central difference inside (0.25, 0.75)
        i = np.arange(520, 1480)
        dfd = (-phi[i + 2] + 8 * phi[i + 1] - 8 * phi[i - 1] + phi[i - 2]) / (12 * h)
        ident = ld[i] * phi[i] + k * tab.psi64[k - 1][i]
        assert np.max(np.abs(dfd - ident)) < 1e-8


def test_spps_unperturbed():
    tab = formal_powers(_free_nv(), 100)
    pair = spps_solution(tab, 1.0, 40)
    x = tab.grid.x
    assert np.max(np.abs(pair.u0 - np.cos(x))) < 1e-10
    assert np.max(np.abs(pair.u1 - np.sin(x))) < 1e-10
    assert np.max(np.abs(pair.wronskian() - 1)) < 1e-12


def test_spps_rho_zero(j2x):
    nv = nonvanishing_solution(j2x.q, j2x.iset, grid=j2x.grid)
    tab = formal_powers(nv, 10)
    pair = spps_solution(tab, 0.0, 1)
    f = tab.f.astype(complex)
    assert np.max(np.abs(pair.u0 - f)) < 1e-14
    assert np.max(np.abs(pair.u1 - f * tab.x_pow[1].astype(complex))) < 1e-14


def test_spps_initial_data_and_wronskian(j2x):
    nv = nonvanishing_solution(j2x.q, j2x.iset, grid=j2x.grid)
    tab = formal_powers(nv, 100)
    pair = spps_solution(tab, 2.5)
    assert pair.u0[0] == 1 and abs(pair.d_u0[0] - nv.h) < 1e-14
    assert pair.u1[0] == 0 and abs(pair.d_u1[0] - 1) < 1e-14
    assert np.max(np.abs(pair.wronskian() - 1)) < 1e-8


def test_spps_matches_closed_form(j1):
    nv = nonvanishing_solution(j1.q, j1.iset, grid=j1.grid)
    tab = formal_powers(nv, 100)
    pair = spps_solution(tab, 3.0)
    c = c_solution(j1, j1.iset, 3.0)
    s = s_solution(j1, j1.iset, 3.0)
    assert np.max(np.abs(pair.u0 - c.u)) < 1e-8
    assert np.max(np.abs(pair.u1 - s.u)) < 1e-8
    i = j1.grid.nodes[0]
    assert abs(pair.d_u0_left[i] - c.du_left[i]) < 1e-8
    assert abs(pair.d_u0[i] - pair.d_u0_left[i] - 2 * pair.u0[i]) < 1e-10


def test_spps_table_too_short():
    tab = formal_powers(_free_nv(), 10)
    with pytest.raises(ValueError):
        spps_solution(tab, 1.0, 6)


def test_nonvanishing_free():
    nv = _free_nv()
    assert np.all(nv.f.values == 1) and nv.h == 0 and nv.tries == 2


def test_nonvanishing_single_interaction(j1):
    nv = nonvanishing_solution(j1.q, j1.iset, grid=j1.grid)
    x = j1.grid.x
    y0 = 1 + 2 * np.where(x > 0.5, x - 0.5, 0)
    assert np.max(np.abs(nv.f.values - y0)) < 1e-14
    i = j1.grid.nodes[0]
    assert abs(nv.df.left[i]) < 1e-14 and abs(nv.df.values[i] - 2) < 1e-14


def test_nonvanishing_real_positive(j2x):
    nv = nonvanishing_solution(j2x.q, j2x.iset, grid=j2x.grid)
    assert np.min(np.abs(nv.f.values)) > 0


def test_y0_sign_change_handled():
    # y0 with data (1, 0) vanishes inside for a strongly attractive interaction
    iset = InteractionSet((0.5,), (-4.0,), 1.0)
    g = Grid.for_interactions(iset, 1000)
    y, _, _ = y0_solution(iset, g, 1.0, 0.0)
    assert y.real.min() < 0
    nv = nonvanishing_solution(np.zeros(1001), iset, grid=g)
    assert np.min(np.abs(nv.f.values)) > 1e-3


def test_nonvanishing_error_when_no_tries():
    iset = InteractionSet((0.5,), (-4.0,), 1.0)
    g = Grid.for_interactions(iset, 1000)
    with pytest.raises(NonVanishingError):
        nonvanishing_solution(np.zeros(1001), iset, grid=g, max_tries=1)


def test_polya_right_inverse():
    tab = formal_powers(_free_nv(), 4)
    x = tab.grid.x
    z = polya_right_inverse(tab, np.zeros(x.size))
    assert np.all(z.values == 0)
    u = polya_right_inverse(tab, np.ones(x.size))
    assert np.max(np.abs(u.values + x**2 / 2)) < 1e-14


def test_polya_maps_formal_powers(j2x):
    # L phi^(k) = -k(k-1) phi^(k-2), so R phi^(2) = -phi^(4)/12
    nv = nonvanishing_solution(j2x.q, j2x.iset, grid=j2x.grid)
    tab = formal_powers(nv, 6)
    u = polya_right_inverse(tab, GridFunction(tab.phi[2], tab.grid))
    assert np.max(np.abs(tab.phi[4] - (-12) * u.values)) < 1e-8
