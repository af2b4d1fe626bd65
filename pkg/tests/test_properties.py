"""Property tests over randomly drawn instances."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from deltasolve.closedform import c_solution, closed_form_solution, propagate_solution, s_solution
from deltasolve.core import (
    Grid,
    IndexSequenceSet,
    InteractionSet,
    PolynomialPotential,
    Problem,
    SpectralParameter,
    ZeroPotential,
    cumulative_integral,
    legendre_P,
    spherical_bessel_table,
)
from deltasolve.core import _sph_jn_upward
from deltasolve.kernels import apply_transmutation, exact_kernel_q0
from deltasolve.nsbf import fl_coefficients, nsbf_error_bound, nsbf_eval
from deltasolve.spps import formal_powers, nonvanishing_solution, spps_solution

SETTINGS = settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def interaction_sets(draw, max_n=4, b=1.0):
    n = draw(st.integers(0, max_n))
    ticks = draw(st.lists(st.integers(1, 39), min_size=n, max_size=n, unique=True))
    pts = tuple(sorted(t * b / 40 for t in ticks))
    als = tuple(draw(st.lists(st.floats(0.1, 3.0), min_size=n, max_size=n)))
    signs = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    return InteractionSet(pts, tuple(s * a for s, a in zip(signs, als)), b)


@st.composite
def problems(draw, max_n=4, M=400):
    iset = draw(interaction_sets(max_n))
    coeffs = draw(st.lists(st.floats(-2, 2), min_size=1, max_size=3))
    return Problem(iset, PolynomialPotential(coeffs), M)


rhos = st.builds(complex, st.floats(-10, 10), st.floats(-1, 1))


@SETTINGS
@given(st.integers(0, 20), st.integers(0, 20))
def test_legendre_orthogonality(n, m):
    g = Grid(2.0, 2000)
    t = g.x - 1.0
    val = cumulative_integral(legendre_P(n, t) * legendre_P(m, t), g)[-1]
    ref = 2 / (2 * n + 1) if n == m else 0.0
    assert abs(val - ref) <= 1e-8


@SETTINGS
@given(st.integers(2, 40), st.floats(0.0, 20.0))
def test_bessel_paths_agree(nmax, extra):
    z = np.array([nmax + extra, nmax + extra + 0.37])
    up = _sph_jn_upward(nmax, z)
    # force the downward branch by asking for a longer table
    down = spherical_bessel_table(int(np.ceil(z.max())) + 1, z)[: nmax + 1]
    assert np.max(np.abs(up - down)) <= 1e-10


@SETTINGS
@given(st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_cumulative_integral_linear(alpha, seed):
    g = Grid(1.0, 200)
    r = np.random.default_rng(seed)
    g1, g2 = r.normal(size=201), r.normal(size=201)
    lhs = cumulative_integral(alpha * g1 + g2, g)
    rhs = alpha * cumulative_integral(g1, g) + cumulative_integral(g2, g)
    assert np.max(np.abs(lhs - rhs)) <= 1e-13 * max(1.0, abs(alpha))


@SETTINGS
@given(interaction_sets(max_n=6))
def test_index_sequence_count(iset):
    seqs = list(IndexSequenceSet(iset))
    assert len(seqs) == len(IndexSequenceSet(iset)) == 2**iset.N - iset.N - 1
    assert len(set(seqs)) == len(seqs)
    assert all(len(s) >= 2 and all(a < b for a, b in zip(s, s[1:])) for s in seqs)


@SETTINGS
@given(interaction_sets())
def test_reflection_involution(iset):
    back = iset.reflected().reflected()
    assert np.allclose(back.points, iset.points, atol=1e-15, rtol=0)
    assert back.strengths == iset.strengths


@SETTINGS
@given(interaction_sets(), st.floats(0.0, 1.0))
def test_sigma_is_step_function(iset, x):
    ref = sum(a for p, a in zip(iset.points, iset.strengths) if p < x)
    assert iset.sigma(x) == ref
    right = sum(a for p, a in zip(iset.points, iset.strengths) if p <= x)
    assert iset.sigma(x, side="right") == right


@SETTINGS
@given(rhos)
def test_lambda_is_rho_squared(rho):
    sp = SpectralParameter(rho)
    assert abs(sp.lam - rho * rho) <= 1e-15 * max(1.0, abs(rho) ** 2)


@SETTINGS
@given(problems(), rhos)
def test_wronskian_and_jumps(P, rho):
    c = c_solution(P, P.iset, rho)
    s = s_solution(P, P.iset, rho)
    W = c.u * s.du - c.du * s.u
    assert np.max(np.abs(W - 1)) <= 1e-8
    for sol in (c, s):
        for i, a in zip(P.grid.nodes, P.iset.strengths):
            assert abs(sol.du[i] - sol.du_left[i] - a * sol.u[i]) <= 1e-8 * max(1.0, abs(sol.u[i]))


@SETTINGS
@given(problems(max_n=3), rhos)
def test_sum_over_J_equals_propagation(P, rho):
    a = closed_form_solution(P, P.iset, rho, 1.0, 1j * rho)
    b = propagate_solution(P, P.iset, rho, 1.0, 1j * rho)
    assert np.max(np.abs(a.u - b.u)) <= 1e-9 * max(1.0, np.max(np.abs(b.u)))


@SETTINGS
@given(problems(max_n=3), rhos)
def test_parity_in_rho(P, rho):
    for f in (c_solution, s_solution):
        assert np.max(np.abs(f(P, P.iset, rho).u - f(P, P.iset, -rho).u)) <= 1e-12 * max(1.0, abs(rho)) ** 2


@SETTINGS
@given(problems(max_n=3), st.floats(0.0, 4.0), st.floats(0.1, 2.0))
def test_conjugation_symmetry(P, rr, ri):
    rho = complex(rr, ri)
    nv = nonvanishing_solution(P.q, P.iset, grid=P.grid)
    if np.all(nv.f.values.imag == 0):
        # real f: the series solutions have real Cauchy data (1, h)
        tab = formal_powers(nv, 40)
        u, v = spps_solution(tab, rho), spps_solution(tab, rho.conjugate())
        assert np.array_equal(np.conj(u.u0), v.u0) and np.array_equal(np.conj(u.u1), v.u1)
    for f in (c_solution, s_solution):
        a, b = f(P, P.iset, rho), f(P, P.iset, rho.conjugate())
        assert np.max(np.abs(np.conj(a.u) - b.u)) <= 1e-10 * max(1.0, np.max(np.abs(a.u)))


@SETTINGS
@given(interaction_sets(max_n=3), st.floats(0.05, 1.0), st.floats(0.0, 1.0))
def test_kernel_even_odd_split(iset, x, frac):
    K = exact_kernel_q0(iset, x)
    t = frac * x
    # skip breakpoints, where one-sided values differ
    if min(abs(abs(t) - abs(p)) for p in np.concatenate([K.breakpoints, [0.0]])) < 1e-9:
        return
    G = lambda s: K(s) + K(-s)
    S = lambda s: K(s) - K(-s)
    assert G(t) == G(-t) and S(t) == -S(-t)


@SETTINGS
@given(interaction_sets(max_n=3), st.floats(0.1, 1.0), rhos, rhos, st.floats(-3, 3))
def test_transmutation_linear(iset, x, r1, r2, beta):
    K = exact_kernel_q0(iset, x)
    u1 = lambda t: np.exp(1j * r1 * t)
    u2 = lambda t: np.cos(r2 * t)
    lhs = apply_transmutation(K, lambda t: beta * u1(t) + u2(t)).value
    rhs = beta * apply_transmutation(K, u1).value + apply_transmutation(K, u2).value
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


_J2X = Problem(InteractionSet((0.25, 0.75), (1.0, 2.0), 1.0), PolynomialPotential([0.0, 1.0]), 1000)
_CO = fl_coefficients(_J2X, N_max=60)


def _node(x):
    g = _J2X.grid
    return float(g.x[np.argmin(np.abs(g.x - x))])


@SETTINGS
@given(st.integers(1, 28), st.floats(0.05, 1.0))
def test_bound_monotone_in_M(M, x):
    x = _node(x)
    # the tail sum loses terms; equal tails may differ by summation rounding
    assert nsbf_error_bound(_CO, x, M + 1) <= nsbf_error_bound(_CO, x, M) * (1 + 1e-12)


@SETTINGS
@given(st.floats(0.0, 20.0), st.floats(0.05, 1.0), st.integers(5, 25))
def test_nsbf_within_bound_and_even(rho, x, M):
    x = _node(x)
    i = _J2X.grid.index_of(x)
    ref = c_solution(_J2X, _J2X.iset, rho).u[i]
    c, s = nsbf_eval(_CO, np.array([rho, -rho]), x, M)
    assert abs(c[0] - ref) <= nsbf_error_bound(_CO, x, M) + 1e-10
    assert c[0] == c[1] and s[0] == s[1]
