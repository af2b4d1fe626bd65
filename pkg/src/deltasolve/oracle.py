"""Reference backends: fixed-step RK4 shooting and brute-force Legendre projections."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import DEFAULT_M, Grid, InteractionSet, legendre_table

__all__ = ["OracleConfig", "rk_shoot", "rk_regular", "project_fl_bruteforce"]


@dataclass(frozen=True)
class OracleConfig:
    """Fixed-step RK4 settings.

    ``substeps`` RK steps are taken per grid interval; ``order`` is fixed at 4.
    """

    substeps: int = 32
    order: int = 4
    rtol: float = 1e-10

    def __post_init__(self):
        if self.substeps < 4:
            raise ValueError("substeps must be at least 4")
        if self.order != 4:
            raise ValueError("only the classical fourth-order method is available")


@numba.njit(cache=True)
def _rk4_run(qf, dx, lam, y, dy, start, stop, S, jumps):
    """March nodes ``start..stop``; ``qf`` holds q at half-substep points.

    ``jumps[i]`` is added as ``dy += jumps[i] * y`` on arrival at node ``i``
    (the stored derivative at a jump node is the right limit).
    """
    n = stop - start + 1
    ys = np.empty(n, dtype=np.complex128)
    dys = np.empty(n, dtype=np.complex128)
    dl = np.empty(n, dtype=np.complex128)
    ys[0] = y
    dl[0] = dy
    dy = dy + jumps[start] * y
    dys[0] = dy
    hs = dx / S
    for i in range(start, stop):
        base = 2 * S * i
        for j in range(S):
            k = base + 2 * j
            a0 = qf[k] - lam
            a1 = qf[k + 1] - lam
            a2 = qf[k + 2] - lam
            k1y = dy
            k1d = a0 * y
            k2y = dy + 0.5 * hs * k1d
            k2d = a1 * (y + 0.5 * hs * k1y)
            k3y = dy + 0.5 * hs * k2d
            k3d = a1 * (y + 0.5 * hs * k2y)
            k4y = dy + hs * k3d
            k4d = a2 * (y + hs * k3y)
            y = y + hs / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            dy = dy + hs / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        m = i + 1 - start
        ys[m] = y
        dl[m] = dy
        dy = dy + jumps[i + 1] * y
        dys[m] = dy
    return ys, dys, dl


def _fine_q(q, grid: Grid, S: int) -> np.ndarray:
    """Potential at the ``2 S M + 1`` half-substep points."""
    t = np.linspace(0.0, grid.b, 2 * S * grid.M + 1)
    if callable(q):
        v = q(t)
    else:
        # grid samples: piecewise cubic interpolation through neighbouring nodes
        from .core import SampledPotential

        v = SampledPotential(np.asarray(q), grid.b)(t)
    return np.broadcast_to(np.asarray(v, dtype=complex), t.shape).copy()


def rk_regular(q, grid: Grid, lam: complex, y: complex, dy: complex, start: int = 0,
               config: OracleConfig = OracleConfig(), qfine=None):
    """RK4 solution of ``-y'' + q y = lam y`` (no interactions) on nodes ``start..M``."""
    S = config.substeps
    if qfine is None:
        qfine = _fine_q(q, grid, S)
    jumps = np.zeros(grid.M + 1, dtype=complex)
    ys, dys, _ = _rk4_run(qfine, grid.h, complex(lam), complex(y), complex(dy), start, grid.M, S, jumps)
    return ys, dys


def rk_shoot(q, iset: InteractionSet, lam: complex, u0: complex, u1: complex, *,
             M: int = DEFAULT_M, grid: Grid | None = None, config: OracleConfig = OracleConfig()):
    """Shoot the Cauchy problem ``u(0) = u0, u'(0) = u1`` through the interactions.

    At each ``x_k`` the derivative jumps by ``alpha_k u(x_k)``.

    Returns
    -------
    AssembledSolution
        Values and right-limit derivatives at the grid nodes, left-limit
        derivatives recorded at interaction nodes; provenance ``"oracle"``.
    """
    from .closedform import AssembledSolution

    if grid is None:
        grid = Grid.for_interactions(iset, M)
    S = config.substeps
    qfine = _fine_q(q, grid, S)
    jumps = np.zeros(grid.M + 1, dtype=complex)
    for i, a in zip(grid.nodes, iset.strengths):
        jumps[i] += a
    ys, dys, dl = _rk4_run(qfine, grid.h, complex(lam), complex(u0), complex(u1), 0, grid.M, S, jumps)
    left = {i: complex(dl[i]) for i in grid.nodes}
    return AssembledSolution(ys, dys, left, grid, "oracle")


def project_fl_bruteforce(kernel, x: float, N_max: int) -> np.ndarray:
    """``a_n(x) = (n + 1/2) int K(x,t) P_n(t/x) dt`` for ``n = 0..N_max``.

    Each polynomial piece is integrated with a Gauss-Legendre rule exact for
    the product degree.
    """
    out = np.zeros(N_max + 1, dtype=complex)
    for lo, hi, poly in kernel.pieces():
        if hi <= lo:
            continue
        npts = (poly.degree() + N_max) // 2 + 2
        t, w = np.polynomial.legendre.leggauss(npts)
        tt = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        ww = 0.5 * (hi - lo) * w
        P = legendre_table(N_max, tt / x)
        out += P @ (ww * poly(tt))
    return out * (np.arange(N_max + 1) + 0.5)
