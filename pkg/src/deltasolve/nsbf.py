"""Fourier-Legendre coefficients of the transmutation kernel and NSBF representations.

The coefficients ``a_n(x)`` of ``K(x, t) = sum (a_n(x)/x) P_n(t/x)`` are
obtained either directly from formal powers, or through the integral
recursion for ``sigma_n = x**n a_n``.  The direct route combines formal powers
with Legendre coefficients whose absolute sums grow geometrically in ``n``;
the recursion avoids that cancellation and is the default for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.linalg

from .closedform import as_problem, c_solution, s_solution
from .core import (
    DEFAULT_M,
    Grid,
    GridFunction,
    InteractionSet,
    Problem,
    cumulative_integral,
    spherical_bessel_table,
)
from .spps import FormalPowerTable, NonVanishingSolution, formal_powers, nonvanishing_solution

__all__ = [
    "rounding_estimate",
    "FLCoefficients",
    "SigmaSequence",
    "NsbfTruncation",
    "ReflectedProblem",
    "PsiTheta",
    "DerivativeCoefficients",
    "RecursionMismatch",
    "SIGMA_VARIANTS",
    "PINNED_VARIANT",
    "legendre_coeff_matrix",
    "fl_coeffs_direct",
    "sigma_recursive",
    "fl_coeffs_recursive",
    "fl_coefficients",
    "pin_sigma_variant",
    "nsbf_eval",
    "nsbf_error_bound",
    "nsbf_truncation",
    "reflected_problem",
    "reflect_and_solve_psi",
    "psi_theta_nsbf",
    "derivative_leading_terms",
    "derivative_eval",
    "derivative_nsbf_coeffs",
    "derivative_nsbf_eval",
]

LMAX = 200
SIGMA_VARIANTS = ("polya", "statement", "proof")
PINNED_VARIANT = "polya"
COND_LIMIT = 1e10
FIT_COND = 1e9
# sigma_n below this multiple of its rounding estimate is treated as zero
NOISE_MARGIN = 100.0


class RecursionMismatch(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Legendre coefficients
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _legendre_exact(N_max: int) -> tuple[tuple[Fraction, ...], ...]:
    P = [(Fraction(1),), (Fraction(0), Fraction(1))]
    for n in range(1, N_max):
        a = [Fraction(0)] + [c * (2 * n + 1) for c in P[n]]
        b = list(P[n - 1]) + [Fraction(0)] * 2
        P.append(tuple((a[i] - n * b[i]) / (n + 1) for i in range(n + 2)))
    return tuple(P[: N_max + 1])


def legendre_coeff_matrix(N_max: int, dtype=float) -> np.ndarray:
    """``L[k, n] = l_{k,n}`` with ``P_n(z) = sum_k l_{k,n} z**k``.

    Built from the exact rational recurrence and rounded once to ``dtype``.
    """
    if N_max > LMAX:
        raise OverflowError(f"Legendre coefficients limited to n <= {LMAX}")
    P = _legendre_exact(max(N_max, 1))
    L = np.zeros((N_max + 1, N_max + 1), dtype=dtype)
    t = np.dtype(dtype).type
    for n in range(N_max + 1):
        for k, c in enumerate(P[n]):
            if c:
                L[k, n] = t(c.numerator) / t(c.denominator)
    return L


# ---------------------------------------------------------------------------
# coefficient tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FLCoefficients:
    """``a_n(x)`` for ``n = 0..N_max`` at every grid node.

    ``a`` is complex128; ``a_ext`` keeps the working-precision values.
    ``h = f'(0)`` of the generating solution fixes the kernel ``K^h``.
    """

    a_ext: np.ndarray
    grid: Grid
    h: complex
    method: str
    f: np.ndarray | None = None

    @property
    def a(self) -> np.ndarray:
        return self.a_ext.astype(complex)

    @property
    def N_max(self) -> int:
        return self.a_ext.shape[0] - 1

    @property
    def g(self) -> np.ndarray:
        """``g_n = 2 a_{2n}``."""
        return 2 * self.a[0::2]

    @property
    def s(self) -> np.ndarray:
        """``s_n = 2 a_{2n+1}``."""
        return 2 * self.a[1::2]

    def at(self, x) -> np.ndarray:
        """Coefficient column at the grid node ``x``."""
        return self.a[:, self.grid.index_of(x)]


def _table(src, K_max: int) -> FormalPowerTable:
    if isinstance(src, FormalPowerTable):
        return src
    return formal_powers(src, K_max)


def fl_coeffs_direct(table: FormalPowerTable, N_max: int) -> FLCoefficients:
    """``a_n(x) = (n + 1/2)(sum_k l_{k,n} phi^(k)(x)/x**k - 1)``; ``a_n(0) = 0``."""
    if table.K_max < N_max:
        raise ValueError("formal power table too short")
    dt = np.finfo(table.phi.dtype).dtype
    L = legendre_coeff_matrix(N_max, dtype=dt)
    x = table.grid.x_as(dt)
    xs = x.copy()
    xs[0] = 1
    m = np.empty((N_max + 1, x.size), dtype=table.phi.dtype)
    xk = np.ones_like(xs)
    for k in range(N_max + 1):
        m[k] = table.phi[k] / xk - 1
        xk = xk * xs
    a = (np.arange(N_max + 1, dtype=dt) + dt.type(0.5))[:, None] * (L.T @ m)
    a[:, 0] = 0
    return FLCoefficients(a, table.grid, table.h, "direct", table.f)


@dataclass(frozen=True, eq=False)
class SigmaSequence:
    """``sigma_n = x**n a_n`` with the auxiliary integrals ``eta_n`` and ``theta_n``."""

    sigma: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    grid: Grid
    h: complex
    variant: str


def _nv(f) -> NonVanishingSolution:
    if isinstance(f, FormalPowerTable):
        f = f.nv
    if not isinstance(f, NonVanishingSolution):
        raise TypeError("sigma recursion needs a NonVanishingSolution (one-sided f')")
    return f


def sigma_recursive(f, N_max: int, variant: str = PINNED_VARIANT) -> SigmaSequence:
    """``sigma_n`` for ``n = 0..N_max`` from the integral recursion.

    ``eta_n = int_0^x ((n-1) f + t f') sigma_{n-2}`` and, depending on
    ``variant``:

    - ``"polya"``: ``theta_n = int (eta_n - t f sigma_{n-2}) / f**2``,
      ``sigma_n = (2n+1)/(2n-3) (x**2 sigma_{n-2} + 2(2n-1) f theta_n)``
    - ``"statement"``: same ``theta_n``, no factor ``f`` in front of it
    - ``"proof"``: ``theta_n = int (eta_n - t f sigma_{n-2})`` and a minus sign
    """
    if variant not in SIGMA_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    nv = _nv(f)
    grid = nv.grid
    fv = nv.f.values
    dfv = nv.df.values
    dt = np.finfo(fv.dtype).dtype
    x = grid.x_as(dt)
    if2 = 1 / (fv * fv)
    sig = np.zeros((N_max + 1, x.size), dtype=fv.dtype)
    eta = np.zeros_like(sig)
    theta = np.zeros_like(sig)
    sig[0] = (fv - 1) / 2
    if N_max >= 1:
        # deviation form of (3/2)(f int 1/f**2 - x)
        sig[1] = dt.type(1.5) * ((fv - 1) * x + fv * cumulative_integral(if2 - 1, grid))
    for n in range(2, N_max + 1):
        g = sig[n - 2]
        w = ((n - 1) * fv + x * dfv) * g
        left = {i: ((n - 1) * fv[i] + x[i] * v) * g[i] for i, v in nv.df.left.items()}
        eta[n] = cumulative_integral(w, grid, left=left)
        if variant == "proof":
            theta[n] = cumulative_integral(eta[n] - x * fv * g, grid)
            tail = -theta[n]
        else:
            theta[n] = cumulative_integral((eta[n] - x * fv * g) * if2, grid)
            tail = fv * theta[n] if variant == "polya" else theta[n]
        sig[n] = dt.type(2 * n + 1) / dt.type(2 * n - 3) * (x * x * g + 2 * (2 * n - 1) * tail)
    return SigmaSequence(sig, eta, theta, grid, nv.h, variant)


def _lowered(nv: NonVanishingSolution) -> NonVanishingSolution:
    f = GridFunction(nv.f.values.astype(complex), nv.grid, dict(nv.f.left))
    df = GridFunction(nv.df.values.astype(complex), nv.grid, dict(nv.df.left))
    return NonVanishingSolution(f, df, nv.h, nv.c, nv.C, nv.tries)


def rounding_estimate(f, N_max: int, variant: str = PINNED_VARIANT, sigma: np.ndarray | None = None
                      ) -> np.ndarray | None:
    """Rounding error carried by extended-precision ``sigma_n``.

    The recursion is rerun in double precision; the difference, scaled by
    the ratio of machine epsilons, estimates the extended-precision error.
    Returns ``None`` for double-precision input.  ``sigma`` may pass the
    extended-precision sequence when already computed.
    """
    nv = _nv(f)
    dt = np.finfo(nv.f.values.dtype).dtype
    if np.finfo(dt).eps >= np.finfo(float).eps:
        return None
    hi = sigma if sigma is not None else sigma_recursive(nv, N_max, variant).sigma
    lo = sigma_recursive(_lowered(nv), N_max, variant).sigma
    r = np.finfo(dt).eps / dt.type(np.finfo(float).eps)
    return r * np.abs(hi - lo.astype(hi.dtype))


def fl_coeffs_recursive(f, N_max: int, variant: str = PINNED_VARIANT, *, noise_margin: float = NOISE_MARGIN
                        ) -> FLCoefficients:
    """``a_n = sigma_n / x**n`` with ``a_n(0) = 0``.

    Near ``x = 0`` the division by ``x**n`` amplifies rounding in ``sigma_n``
    without bound.  For extended-precision input, values of ``sigma_n`` below
    ``noise_margin`` times :func:`rounding_estimate` carry no correct digits
    and the corresponding ``a_n`` are set to zero.
    """
    seq = sigma_recursive(f, N_max, variant)
    noise = None
    if noise_margin > 0:
        noise = rounding_estimate(f, N_max, variant, seq.sigma)
    dt = np.finfo(seq.sigma.dtype).dtype
    x = seq.grid.x_as(dt)
    xs = x.copy()
    xs[0] = 1
    a = np.empty_like(seq.sigma)
    xk = np.ones_like(xs)
    for n in range(N_max + 1):
        a[n] = seq.sigma[n] / xk
        if noise is not None:
            a[n] = np.where(np.abs(seq.sigma[n]) > noise_margin * noise[n], a[n], 0)
        xk = xk * xs
    a[:, 0] = 0
    return FLCoefficients(a, seq.grid, seq.h, f"recursive:{variant}", _nv(f).f.values)


def fl_coefficients(q, iset: InteractionSet | None = None, N_max: int = 120, *, M: int = DEFAULT_M,
                    method: str = "recursive", seed: int = 0) -> FLCoefficients:
    """Coefficient table of a problem by the chosen method (``"recursive"`` or ``"direct"``)."""
    problem = as_problem(q, iset if iset is not None else q.iset, M)
    nv = nonvanishing_solution(problem.q, problem.iset, seed, grid=problem.grid)
    if method == "recursive":
        return fl_coeffs_recursive(nv, N_max)
    if method == "direct":
        return fl_coeffs_direct(formal_powers(nv, N_max), N_max)
    raise ValueError(f"unknown method {method!r}")


def pin_sigma_variant(f, N_max: int = 20, tol: float = 1e-7, table: FormalPowerTable | None = None):
    """Compare every recursion variant with the direct formula in ``sigma`` form.

    Returns ``(selected, deviations)``; raises :class:`RecursionMismatch` when
    no variant is within ``tol``.
    """
    nv = _nv(f)
    table = table or formal_powers(nv, N_max)
    direct = fl_coeffs_direct(table, N_max)
    dt = np.finfo(direct.a_ext.dtype).dtype
    x = nv.grid.x_as(dt)
    ref = direct.a_ext * x[None, :] ** np.arange(N_max + 1)[:, None]
    dev = {}
    for v in SIGMA_VARIANTS:
        s = sigma_recursive(nv, N_max, v).sigma
        dev[v] = float(np.max(np.abs(s - ref)))
    best = min(dev, key=dev.get)
    if dev[best] > tol:
        raise RecursionMismatch(f"recursion variant mismatch: {best} deviates by {dev[best]:.3e}")
    return best, dev


# ---------------------------------------------------------------------------
# NSBF evaluation and error bound
# ---------------------------------------------------------------------------


def _bessel(nmax, z):
    return spherical_bessel_table(nmax, np.asarray(z, dtype=complex))


def _nsbf_sums(g, s, rho, x, M):
    rho = np.asarray(rho, dtype=complex)
    z = rho * x
    J = _bessel(2 * M + 1, z)
    sign = (-1.0) ** np.arange(M + 1)
    c = np.cos(z) + np.tensordot(sign * g[: M + 1], J[0 : 2 * M + 1 : 2], axes=(0, 0))
    odd = np.tensordot(sign * s[: M + 1], J[1 : 2 * M + 2 : 2], axes=(0, 0))
    # limit value, exact up to O(|rho x|**2)
    small = np.abs(z) < 1e-8
    rsafe = np.where(small, 1.0, rho)
    sv = np.where(small, x * (1 + s[0] / 3), (np.sin(z) + odd) / rsafe)
    return c, sv


def nsbf_eval(coeffs: FLCoefficients, rho, x: float, M: int, h: complex | None = None):
    """Truncated NSBF values ``(c_M, s_M)`` at the grid node ``x``.

    ``c_M = cos(rho x) + sum (-1)^n g_n j_{2n}(rho x)`` and
    ``s_M = (sin(rho x) + sum (-1)^n s_n j_{2n+1}(rho x)) / rho``.  With ``h``
    given, ``c`` is shifted to the cosine-type solution with ``c'(0) = h``.
    """
    if M > coeffs.N_max // 2:
        raise ValueError("M exceeds the coefficient table")
    col = coeffs.at(x)
    g, s = 2 * col[0::2], 2 * col[1::2]
    c, sv = _nsbf_sums(g, s, rho, float(x), M)
    if h is not None and h != coeffs.h:
        c = c + (h - coeffs.h) * sv
    return c, sv


def nsbf_error_bound(coeffs: FLCoefficients, x: float, M: int, C: float = 0.0, b: float | None = None) -> float:
    """``2 eps sqrt(sinh(2 b C)/C)`` with ``eps**2 = sum_{n>2M} 2|a_n|**2/((2n+1) x)``.

    The tail is truncated at the table length, so the value is an estimate of
    the bound.  ``C = 0`` uses the limit ``sqrt(2 b)``.
    """
    if not coeffs.N_max > 2 * M + 1:
        raise ValueError("table too short for the requested truncation")
    b = coeffs.grid.b if b is None else b
    x = float(x)
    if x <= 0:
        return 0.0
    a = coeffs.at(x)
    n = np.arange(2 * M + 1, coeffs.N_max + 1)
    eps = float(np.sqrt(np.sum(2 * np.abs(a[n]) ** 2 / ((2 * n + 1) * x))))
    fac = np.sqrt(2 * b) if C == 0 else np.sqrt(np.sinh(2 * b * C) / C)
    return 2 * eps * float(fac)


@dataclass(frozen=True)
class NsbfTruncation:
    """Truncation order, tail estimate and strip half-width for one ``x``."""

    M: int
    x: float
    eps: float
    C: float
    bound: float
    kind: str = "estimate"


def nsbf_truncation(coeffs: FLCoefficients, x: float, M: int, C: float = 0.0) -> NsbfTruncation:
    bound = nsbf_error_bound(coeffs, x, M, C)
    fac = np.sqrt(2 * coeffs.grid.b) if C == 0 else np.sqrt(np.sinh(2 * coeffs.grid.b * C) / C)
    return NsbfTruncation(M, float(x), bound / (2 * float(fac)), C, bound)


# ---------------------------------------------------------------------------
# reflected problem: solutions normalized at x = b
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReflectedProblem:
    """Interactions ``(b - x_{N-j}, alpha_{N-j})`` and potential ``q(b - x)``."""

    original: Problem
    problem: Problem

    @property
    def iset(self) -> InteractionSet:
        return self.problem.iset

    def reflect(self) -> "ReflectedProblem":
        return ReflectedProblem(self.problem, self.original)


def reflected_problem(q, iset: InteractionSet | None = None, M: int = DEFAULT_M) -> ReflectedProblem:
    p = as_problem(q, iset if iset is not None else q.iset, M)
    return ReflectedProblem(p, p.reflected())


@dataclass(frozen=True, eq=False)
class PsiTheta:
    """``psi^H`` and ``vartheta`` with their ``x``-derivatives at the grid nodes."""

    rho: complex
    psi: np.ndarray
    dpsi: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    grid: Grid

    def at(self, x):
        i = self.grid.index_of(x)
        return self.psi[i], self.dpsi[i], self.theta[i], self.dtheta[i]


def reflect_and_solve_psi(q, iset: InteractionSet | None, H: complex, rho: complex, x=None, *,
                          M: int = DEFAULT_M, backend: str = "spps"):
    """``psi^H(rho, x) = c*(rho, b - x)`` and ``vartheta(rho, x) = s*(rho, b - x)``.

    ``c*`` and ``s*`` solve the reflected problem with data ``(1, H)`` and
    ``(0, 1)``.  Derivatives change sign under reflection, so
    ``psi'(b) = -H`` and ``vartheta'(b) = -1``.  Returns a :class:`PsiTheta`,
    or the tuple ``(psi, vartheta)`` at ``x`` when ``x`` is given.
    """
    rp = q if isinstance(q, ReflectedProblem) else reflected_problem(q, iset, M)
    P = rp.problem
    c = c_solution(P, P.iset, rho, H, backend=backend)
    s = s_solution(P, P.iset, rho, backend=backend)
    out = PsiTheta(complex(rho), c.u[::-1].copy(), -c.du_left_values()[::-1],
                   s.u[::-1].copy(), -s.du_left_values()[::-1], rp.original.grid)
    if x is None:
        return out
    i = out.grid.index_of(x)
    return out.psi[i], out.theta[i]


def psi_theta_nsbf(coeffs_reflected: FLCoefficients, rho, x: float, M: int, H: complex | None = None):
    """NSBF of ``psi^H`` and ``vartheta`` at ``x`` from the reflected problem's coefficients.

    ``tau_n(x) = g*_n(b - x)`` and ``zeta_n(x) = s*_n(b - x)``; the sine-type
    series uses ``j_{2n+1}(rho (b - x))/rho``.
    """
    b = coeffs_reflected.grid.b
    xr = coeffs_reflected.grid.x[coeffs_reflected.grid.index_of(b - x)]
    return nsbf_eval(coeffs_reflected, rho, xr, M, h=H)


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def _sigma_side(iset: InteractionSet, x: float, side: str) -> complex:
    return complex(iset.sigma(x, side=side))


def _active(iset: InteractionSet, x: float, side: str):
    """Interactions switched on at ``x`` (inclusive of ``x_k = x`` on the right side)."""
    out = []
    for p, a in zip(iset.points, iset.strengths):
        if p < x or (side == "right" and p == x):
            out.append((p, a))
    return out


def derivative_leading_terms(problem: Problem, rho, x: float, h: complex = 0.0, side: str = "left"):
    """Explicit parts of ``c'`` and ``s'`` at ``x``.

    ``c'``: ``-rho sin(rho x) + (h + w(0,x) + sigma(x)/2) cos(rho x)
    + sum (alpha_k/2) H(x - x_k) cos(rho (2 x_k - x))``;
    ``s'``: ``cos(rho x) + (w + sigma/2) sin(rho x)/rho
    + sum (alpha_k/2) H(x - x_k) sin(rho (2 x_k - x))/rho``.
    Returns ``(c_lead, rho * s_lead)`` so the sine part stays finite at 0.
    """
    rho = np.asarray(rho, dtype=complex)
    iset = problem.iset
    i = problem.grid.index_of(x)
    w = complex(problem.primitive.w(0, i))
    sig = _sigma_side(iset, x, side)
    z = rho * x
    c = -rho * np.sin(z) + (h + w + sig / 2) * np.cos(z)
    s = rho * np.cos(z) + (w + sig / 2) * np.sin(z)
    for p, a in _active(iset, x, side):
        c = c + a / 2 * np.cos(rho * (2 * p - x))
        s = s + a / 2 * np.sin(rho * (2 * p - x))
    return c, s


def derivative_eval(q, iset: InteractionSet | None, rho, x: float, side: str = "left", h: complex = 0.0, *,
                    M: int = DEFAULT_M, backend: str = "spps"):
    """One-sided ``(c'(rho, x), s'(rho, x))`` from the termwise SPPS derivatives."""
    problem = as_problem(q, iset if iset is not None else q.iset, M)
    i = problem.grid.index_of(x)
    out = []
    for sol in (c_solution(problem, problem.iset, rho, h, backend=backend),
                s_solution(problem, problem.iset, rho, backend=backend)):
        if side == "left" and i in sol.du_left:
            out.append(sol.du_left[i])
        else:
            out.append(sol.du[i])
    return tuple(out)


@dataclass(frozen=True)
class DerivativeCoefficients:
    """Collocation coefficients ``l_n`` (cosine type) and ``r_n`` (sine type) at one ``x``."""

    x: float
    side: str
    h: complex
    l: np.ndarray
    r: np.ndarray
    rho_samples: np.ndarray
    cond: float
    problem: Problem


def _chebyshev(n, hi):
    k = np.arange(n)
    return 0.5 * hi * (1 - np.cos(np.pi * (k + 0.5) / n))


def derivative_nsbf_coeffs(coeffs: FLCoefficients | None, iset: InteractionSet | None, q, h: complex, x: float,
                           M: int, rho_samples=None, *, side: str = "left", backend: str = "spps",
                           grid_M: int = DEFAULT_M) -> DerivativeCoefficients:
    """Least-squares fit of the Bessel parts of ``c'`` and ``s'`` at ``x``.

    Samples of ``c'``, ``s'`` come from the SPPS solutions; after subtracting
    the leading terms the residuals are fitted in ``(-1)^n j_{2n}(rho x)`` and
    ``(-1)^n j_{2n+1}(rho x)/rho``.  Default samples: ``4(M+1)`` Chebyshev
    points on ``[0, R/x]`` with ``R = max(4 pi, 2M + 2)``, widened by 25%
    steps while the cosine matrix has condition number above ``FIT_COND``.
    The fit is reliable for ``|rho|`` inside the sampled range.
    """
    if coeffs is not None:
        grid_M = coeffs.grid.M
    problem = as_problem(q, iset if iset is not None else q.iset, grid_M)
    x = float(x)
    J = None
    if rho_samples is None:
        # narrowest range first: accuracy inside the range drops as it widens
        hi = max(4 * np.pi, 2 * M + 2) / x
        while True:
            rho_samples = _chebyshev(4 * (M + 1), hi)
            J = _bessel(2 * M + 1, rho_samples * x).real
            if np.linalg.cond(J[0 : 2 * M + 1 : 2].T) <= FIT_COND or hi * x > 40 * (M + 1):
                break
            hi *= 1.25
    rho_samples = np.asarray(rho_samples, dtype=float)
    if rho_samples.size < 2 * (M + 1):
        raise ValueError("need at least 2(M+1) collocation samples")
    dc = np.empty(rho_samples.size, dtype=complex)
    ds = np.empty(rho_samples.size, dtype=complex)
    for j, r in enumerate(rho_samples):
        dc[j], ds[j] = derivative_eval(problem, None, r, x, side, h, backend=backend)
    lc, ls = derivative_leading_terms(problem, rho_samples, x, h, side)
    res_c = dc - lc
    res_s = rho_samples * ds - ls
    if J is None:
        J = _bessel(2 * M + 1, rho_samples * x).real
    sign = (-1.0) ** np.arange(M + 1)
    Ac = (sign[:, None] * J[0 : 2 * M + 1 : 2]).T
    As = (sign[:, None] * J[1 : 2 * M + 2 : 2]).T
    cond = max(np.linalg.cond(Ac), np.linalg.cond(As))
    if not cond < COND_LIMIT:
        raise np.linalg.LinAlgError(
            f"collocation matrix ill-conditioned (cond={cond:.2e}); use more or better-spread samples"
        )
    l = scipy.linalg.lstsq(Ac, res_c)[0]
    r = scipy.linalg.lstsq(As, res_s)[0]
    return DerivativeCoefficients(x, side, complex(h), l, r, rho_samples, float(cond), problem)


def derivative_nsbf_eval(dc: DerivativeCoefficients, rho):
    """``(c'_M, s'_M)`` from fitted coefficients."""
    rho = np.asarray(rho, dtype=complex)
    M = dc.l.size - 1
    lc, ls = derivative_leading_terms(dc.problem, rho, dc.x, dc.h, dc.side)
    J = _bessel(2 * M + 1, rho * dc.x)
    sign = (-1.0) ** np.arange(M + 1)
    c = lc + np.tensordot(sign * dc.l, J[0 : 2 * M + 1 : 2], axes=(0, 0))
    srho = ls + np.tensordot(sign * dc.r, J[1 : 2 * M + 2 : 2], axes=(0, 0))
    small = np.abs(rho * dc.x) < 1e-8
    s = srho / np.where(small, 1.0, rho)
    if np.any(small):
        s = np.where(small, _sprime_at_zero(dc), s)
    return c, s


def _sprime_at_zero(dc: DerivativeCoefficients) -> complex:
    """``rho -> 0`` limit of the fitted ``s'``: ``j_1(z)/rho -> x/3``, higher orders vanish."""
    x = dc.x
    problem = dc.problem
    w = complex(problem.primitive.w(0, problem.grid.index_of(x)))
    val = 1 + (w + _sigma_side(problem.iset, x, dc.side) / 2) * x
    for p, a in _active(problem.iset, x, dc.side):
        val += a / 2 * (2 * p - x)
    return val + dc.r[0] * x / 3
