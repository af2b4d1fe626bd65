"""Spectral parameter power series for the δ-interaction equation.

A non-vanishing solution ``f`` of the equation at ``lambda = 0`` generates
recursive integrals, formal powers and, from them, two series solutions in
powers of ``rho**2``.  Tables are built in extended precision by default
because later coefficient formulas combine formal powers with large
alternating weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import (
    DEFAULT_KMAX,
    Grid,
    GridFunction,
    IndexSequenceSet,
    InteractionSet,
    cumulative_integral,
)

__all__ = [
    "NonVanishingError",
    "NonVanishingSolution",
    "FormalPowerTable",
    "SppsSolutionPair",
    "y0_solution",
    "recursive_integrals",
    "formal_powers",
    "spps_solution",
    "nonvanishing_solution",
    "polya_right_inverse",
]

TOL_ZERO = 1e-8
MAX_TRIES = 64


class NonVanishingError(RuntimeError):
    """No candidate combination stayed away from zero on the grid."""

    def __init__(self, message: str, min_abs: float):
        super().__init__(f"{message} (minimal |f| found: {min_abs:.3e})")
        self.min_abs = min_abs


def _work_dtype(extended: bool):
    return np.clongdouble if extended else np.complex128


def _x(grid: Grid, dtype) -> np.ndarray:
    return grid.x_as(np.finfo(np.dtype(dtype)).dtype)


def _cumint(v, grid):
    return cumulative_integral(v, grid)


# ---------------------------------------------------------------------------
# non-vanishing particular solution
# ---------------------------------------------------------------------------


def y0_solution(iset: InteractionSet, grid: Grid, c1: complex, c2: complex, extended: bool = True):
    """Solution of ``-y'' + sum alpha_k delta_k y = 0`` with data ``(c1, c2)``.

    Uses the explicit sum over index sequences: on ``(x_j, x_{j+1})`` the
    solution is linear, and the slope gained at ``x_j`` collects every
    increasing sequence ending at ``j``.

    Returns
    -------
    y, dy, dy_left
        Values, right-limit derivatives, and left-limit derivatives at the
        interaction nodes (dict by node index).
    """
    dt = _work_dtype(extended)
    x = _x(grid, dt)
    pts = [x[i] for i in grid.nodes]
    al = [dt(a) for a in iset.strengths]
    c1, c2 = dt(c1), dt(c2)
    N = iset.N
    D = [al[j] * (c1 + c2 * pts[j]) for j in range(N)]
    if N <= 20:
        for seq in IndexSequenceSet(iset):
            prod = c1 + c2 * pts[seq[0]]
            for a, b in zip(seq[:-1], seq[1:]):
                prod = prod * (pts[b] - pts[a])
            for j in seq:
                prod = prod * al[j]
            D[seq[-1]] += prod
    else:
        # same coefficients by forward recursion
        for j in range(N):
            val = c1 + c2 * pts[j] + sum(D[i] * (pts[j] - pts[i]) for i in range(j))
            D[j] = al[j] * val
    y = c1 + c2 * x
    dy = np.full(x.shape, c2, dtype=dt)
    for j, i in enumerate(grid.nodes):
        on = x >= pts[j]
        y = y + np.where(on, D[j] * (x - pts[j]), 0)
        dy = dy + np.where(on, D[j], 0)
    dy_left = {i: dy[i] - D[j] for j, i in enumerate(grid.nodes)}
    return y, dy, dy_left


def _y_series(q, y, dy, dy_left, grid, tol, kcap=400):
    """``f0, f1`` and their derivatives from the iterated integrals of ``q y**2``, ``1/y**2``."""
    wq = q * y * y
    wi = 1.0 / (y * y)
    one = np.ones_like(y)
    ev_t, od_t = one.copy(), np.zeros_like(y)  # sums of Ytilde over even / odd k
    ev_y, od_y = one.copy(), np.zeros_like(y)  # sums of Y over even / odd k
    Yt, Yp = one, one
    quiet = 0
    for k in range(1, kcap + 1):
        Yt = _cumint(Yt * (wq if k % 2 else wi), grid)
        Yp = _cumint(Yp * (wi if k % 2 else wq), grid)
        if k % 2:
            od_t += Yt
            od_y += Yp
        else:
            ev_t += Yt
            ev_y += Yp
        small = max(float(np.max(np.abs(Yt))), float(np.max(np.abs(Yp)))) < tol
        quiet = quiet + 1 if small else 0
        if quiet >= 2:
            break
    else:
        raise NonVanishingError("series for the particular solutions did not converge", 0.0)
    f0 = y * ev_t
    f1 = y * od_y
    df0 = dy * ev_t + od_t / y
    df1 = dy * od_y + ev_y / y
    df0_left = {i: dy_left[i] * ev_t[i] + od_t[i] / y[i] for i in dy_left}
    df1_left = {i: dy_left[i] * od_y[i] + ev_y[i] / y[i] for i in dy_left}
    return f0, f1, df0, df1, df0_left, df1_left


@dataclass(frozen=True)
class NonVanishingSolution:
    """Normalized non-vanishing solution ``f`` (``f(0) = 1``) with one-sided ``f'``."""

    f: GridFunction
    df: GridFunction
    h: complex
    c: tuple[complex, complex]
    C: tuple[complex, complex]
    tries: int

    @property
    def grid(self) -> Grid:
        return self.f.grid


def _accept(f, tol_zero):
    m = np.abs(f)
    return float(np.min(m)) >= tol_zero * float(np.max(m)), float(np.min(m))


def nonvanishing_solution(
    q,
    iset: InteractionSet,
    seed: int = 0,
    *,
    grid: Grid | None = None,
    extended: bool = True,
    tol_zero: float = TOL_ZERO,
    max_tries: int = MAX_TRIES,
) -> NonVanishingSolution:
    """Particular solution of the ``lambda = 0`` equation without zeros on the grid.

    Parameters
    ----------
    q : GridFunction or ndarray
        Regular potential samples.
    iset : InteractionSet
        Point interactions.
    seed : int
        Seed of the generator used for random combinations.

    Returns
    -------
    NonVanishingSolution
        ``f`` normalized by ``f(0) = 1`` together with ``h = f'(0)``.
    """
    if isinstance(q, GridFunction):
        grid = q.grid
        qv = q.values
    else:
        if grid is None:
            grid = Grid.for_interactions(iset, len(q) - 1)
        qv = np.asarray(q)
    dt = _work_dtype(extended)
    qv = qv.astype(dt)
    rng = np.random.default_rng(seed)
    real_data = bool(np.all(np.imag(qv) == 0)) and iset.is_real
    series_tol = 1e-21 if extended else 1e-18

    if iset.N == 0 or all(a.real > 0 for a in iset.strengths):
        cands_y0 = [(1.0, 0.0)]
    else:
        cands_y0 = [(1.0, 0.3j)]
    tries = 0
    best = np.inf
    y_pick = None
    while tries < max_tries:
        c = cands_y0.pop(0) if cands_y0 else (1.0, complex(*rng.standard_normal(2)))
        tries += 1
        y, dy, dyl = y0_solution(iset, grid, *c, extended=extended)
        ok, mn = _accept(y, tol_zero)
        best = min(best, mn)
        if ok:
            y_pick = (c, y, dy, dyl)
            break
    if y_pick is None:
        raise NonVanishingError("no non-vanishing solution of the q = 0 problem found", best)
    c, y, dy, dyl = y_pick
    f0, f1, df0, df1, df0l, df1l = _y_series(qv, y, dy, dyl, grid, series_tol)

    cands = [(1.0, 0.0)]
    if real_data:
        cands.append((1.0, 1j))
    while tries < max_tries:
        if cands:
            C = cands.pop(0)
        else:
            C = tuple(complex(*rng.standard_normal(2)) for _ in range(2))
        tries += 1
        if C[0] == 0:
            continue
        f = C[0] * f0 + C[1] * f1
        ok, mn = _accept(f, tol_zero)
        best = min(best, mn)
        if not ok:
            continue
        f0v = f[0]
        f = f / f0v
        df = (C[0] * df0 + C[1] * df1) / f0v
        dfl = {i: (C[0] * df0l[i] + C[1] * df1l[i]) / f0v for i in df0l}
        return NonVanishingSolution(
            f=GridFunction(f, grid),
            df=GridFunction(df, grid, dfl),
            h=complex(df[0]),
            c=tuple(complex(v) for v in c),
            C=tuple(complex(v) for v in C),
            tries=tries,
        )
    raise NonVanishingError("no non-vanishing combination found", best)


# ---------------------------------------------------------------------------
# recursive integrals and formal powers
# ---------------------------------------------------------------------------


def _values(f, grid):
    if isinstance(f, NonVanishingSolution):
        return f.f.values, f.grid
    if isinstance(f, GridFunction):
        return f.values, f.grid
    if grid is None:
        raise TypeError("grid required for array input")
    return np.asarray(f), grid


def recursive_integrals(f, K_max: int, grid: Grid | None = None):
    """Recursive integrals ``Xtilde^(k)``, ``X^(k)`` for ``k = 0..K_max``.

    Returns two arrays of shape ``(K_max+1, M+1)`` in the precision of ``f``.
    """
    fv, grid = _values(f, grid)
    if not np.issubdtype(fv.dtype, np.complexfloating):
        fv = fv.astype(complex)
    if np.min(np.abs(fv)) == 0 or not np.all(np.isfinite(fv)):
        raise ValueError("non-vanishing solution required")
    f2 = fv * fv
    if2 = 1.0 / f2
    Xt = np.empty((K_max + 1,) + fv.shape, dtype=fv.dtype)
    X = np.empty_like(Xt)
    Xt[0] = 1
    X[0] = 1
    for k in range(1, K_max + 1):
        Xt[k] = k * _cumint(Xt[k - 1] * (f2 if k % 2 else if2), grid)
        X[k] = k * _cumint(X[k - 1] * (if2 if k % 2 else f2), grid)
    return Xt, X


@dataclass(frozen=True, eq=False)
class FormalPowerTable:
    """Formal powers ``phi^(k)``, auxiliary powers ``psi^(k)`` and recursive integrals."""

    grid: Grid
    f: np.ndarray
    df: np.ndarray
    df_left: dict
    h: complex
    phi: np.ndarray
    psi: np.ndarray
    xtilde: np.ndarray
    x_pow: np.ndarray
    m1: float
    nv: NonVanishingSolution | None = field(default=None, repr=False)

    @property
    def K_max(self) -> int:
        return self.phi.shape[0] - 1

    @cached_property
    def phi64(self) -> np.ndarray:
        return self.phi.astype(complex)

    @cached_property
    def psi64(self) -> np.ndarray:
        return self.psi.astype(complex)

    @cached_property
    def log_derivative(self) -> tuple[np.ndarray, dict]:
        """``f'/f`` (right limits) and its left limits at interaction nodes."""
        f = self.f.astype(complex)
        r = self.df.astype(complex) / f
        left = {i: complex(v) / complex(self.f[i]) for i, v in self.df_left.items()}
        return r, left

    def phi_k(self, k: int) -> GridFunction:
        return GridFunction(self.phi[k], self.grid)

    def psi_k(self, k: int) -> GridFunction:
        return GridFunction(self.psi[k], self.grid)


def formal_powers(f, K_max: int = DEFAULT_KMAX, df=None, grid: Grid | None = None) -> FormalPowerTable:
    """Formal powers of a non-vanishing solution.

    ``phi^(k) = f Xtilde^(k)`` for even ``k`` and ``f X^(k)`` for odd ``k``;
    ``psi^(k) = Xtilde^(k)/f`` for odd ``k`` and ``X^(k)/f`` for even ``k``.
    Derivative data comes from a :class:`NonVanishingSolution` or ``df``.
    """
    nv = f if isinstance(f, NonVanishingSolution) else None
    fv, grid = _values(f, grid)
    if not np.issubdtype(fv.dtype, np.complexfloating):
        fv = fv.astype(complex)
    if nv is not None:
        dfv, dfl, h = nv.df.values, dict(nv.df.left), nv.h
    elif df is not None:
        if isinstance(df, GridFunction):
            dfv, dfl = df.values, dict(df.left)
        else:
            dfv, dfl = np.asarray(df), {}
        h = complex(dfv[0] / fv[0])
    else:
        dfv, dfl, h = np.full(fv.shape, np.nan, dtype=fv.dtype), {}, complex("nan")
    Xt, X = recursive_integrals(fv, K_max, grid)
    k = np.arange(K_max + 1)[:, None]
    even = k % 2 == 0
    phi = np.where(even, fv * Xt, fv * X)
    psi = np.where(even, X / fv, Xt / fv)
    m1 = float(np.max(np.abs(fv * fv)) * np.max(np.abs(1.0 / (fv * fv))))
    return FormalPowerTable(grid, fv, np.asarray(dfv, dtype=fv.dtype), dfl, h, phi, psi, Xt, X, m1, nv)


# ---------------------------------------------------------------------------
# SPPS series
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SppsSolutionPair:
    """Series solutions ``u0``, ``u1`` and their derivatives at one ``rho``.

    Derivative arrays hold right limits; ``d_u0_left``/``d_u1_left`` record the
    left limits at interaction nodes.
    """

    rho: complex
    terms: int
    u0: np.ndarray
    u1: np.ndarray
    d_u0: np.ndarray
    d_u1: np.ndarray
    d_u0_left: dict
    d_u1_left: dict
    tail_bound: float
    grid: Grid

    def wronskian(self) -> np.ndarray:
        return self.u0 * self.d_u1 - self.d_u0 * self.u1


def _majorant_tail(table: FormalPowerTable, rho: complex, start: int) -> float:
    """Sum of ``|f| (|rho| M1 b)**k / k!`` over ``k >= start``."""
    fmax = float(np.max(np.abs(table.f)))
    z = abs(rho) * table.m1 * table.grid.b
    if z == 0:
        return 0.0 if start > 0 else fmax
    k = np.arange(start, start + int(2 * z) + 200)
    logt = k * math.log(z) - np.array([math.lgamma(v + 1) for v in k])
    top = float(np.max(logt))
    if top + math.log(fmax) > 700:
        return math.inf
    return fmax * float(np.sum(np.exp(logt)))


def _default_terms(table: FormalPowerTable, rho: complex) -> int:
    z = abs(rho) * table.m1 * table.grid.b
    cap = table.K_max // 2
    for T in range(1, cap + 1):
        k = 2 * T
        if z == 0 or (k > z and k * math.log(z) - math.lgamma(k + 1) < math.log(1e-18)):
            return T
    return cap


def spps_solution(table: FormalPowerTable, rho: complex, terms: int | None = None) -> SppsSolutionPair:
    """Truncated SPPS solutions at ``rho``.

    ``u0 = sum (-1)^k rho^(2k) phi^(2k)/(2k)!`` and
    ``u1 = sum (-1)^k rho^(2k) phi^(2k+1)/(2k+1)!`` over ``k < terms``.
    ``u0(0) = 1, u0'(0) = h``; ``u1(0) = 0, u1'(0) = 1``.
    """
    rho = complex(rho)
    if terms is None:
        terms = _default_terms(table, rho)
    if terms < 1:
        raise ValueError("terms must be at least 1")
    if terms > table.K_max // 2:
        raise ValueError("formal power table too short")
    lam = rho * rho
    c_even = np.empty(terms, dtype=complex)  # (-1)^k rho^2k / (2k)!
    c_odd = np.empty(terms, dtype=complex)  # (-1)^k rho^2k / (2k+1)!
    c_even[0] = 1.0
    c_odd[0] = 1.0
    for k in range(1, terms):
        c_even[k] = c_even[k - 1] * (-lam) / ((2 * k - 1) * (2 * k))
        c_odd[k] = c_odd[k - 1] * (-lam) / ((2 * k) * (2 * k + 1))
    phi, psi = table.phi64, table.psi64
    u0 = c_even @ phi[0 : 2 * terms : 2]
    u1 = c_odd @ phi[1 : 2 * terms : 2]
    # derivative sums: u0' - (f'/f) u0 = sum_{k>=1} (-1)^k rho^2k psi^(2k-1)/(2k-1)!
    #                  u1' - (f'/f) u1 = sum_{k>=0} (-1)^k rho^2k psi^(2k)/(2k)!
    c_d0 = c_even[1:terms] * (2 * np.arange(1, terms))
    s0 = c_d0 @ psi[1 : 2 * terms - 2 : 2] if terms > 1 else np.zeros_like(u0)
    s1 = c_even @ psi[0 : 2 * terms - 1 : 2]
    ld, ld_left = table.log_derivative
    du0 = ld * u0 + s0
    du1 = ld * u1 + s1
    du0_left = {i: ld_left[i] * u0[i] + s0[i] for i in ld_left}
    du1_left = {i: ld_left[i] * u1[i] + s1[i] for i in ld_left}
    tail = _majorant_tail(table, rho, 2 * terms)
    return SppsSolutionPair(rho, terms, u0, u1, du0, du1, du0_left, du1_left, tail, table.grid)


def polya_right_inverse(table: FormalPowerTable, g) -> GridFunction:
    """Solution of ``L u = g`` with ``u(0) = u'(0) = 0``: ``-f int f^-2 int f g``."""
    if isinstance(g, GridFunction):
        gv, left = g.values, dict(g.left)
    else:
        gv, left = np.asarray(g), {}
    f = table.f
    gv = gv.astype(f.dtype)
    inner = cumulative_integral(f * gv, table.grid, left={i: f[i] * v for i, v in left.items()})
    u = -f * _cumint(inner / (f * f), table.grid)
    return GridFunction(u, table.grid)
