"""Sturm-Liouville spectra of the δ-interaction operator on ``[0, b]``.

The characteristic function is ``Delta(lam) = g0 y(b) + g1 y'(b)`` for the
solution ``y = b0 s - b1 c`` (``c`` of cosine type with ``c'(0) = 0``), which
satisfies ``b0 y(0) + b1 y'(0) = 0``.  Real eigenvalues are bracketed by a
sign-change scan and refined with Brent's method.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .closedform import propagate_solution, transfer_matrix
from .core import Problem

__all__ = [
    "BoundaryConditions",
    "Eigenpair",
    "Spectrum",
    "CharacteristicFunction",
    "characteristic_function",
    "find_eigenvalues",
    "eigenfunction",
    "MissedRootsWarning",
]

BACKENDS = ("propagation", "nsbf", "oracle")


class MissedRootsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BoundaryConditions:
    """``b0 y(0) + b1 y'(0) = 0`` and ``g0 y(b) + g1 y'(b) = 0``."""

    beta0: float = 1.0
    beta1: float = 0.0
    gamma0: float = 1.0
    gamma1: float = 0.0

    def __post_init__(self):
        if self.beta0 == 0 and self.beta1 == 0:
            raise ValueError("left boundary condition is trivial")
        if self.gamma0 == 0 and self.gamma1 == 0:
            raise ValueError("right boundary condition is trivial")

    @classmethod
    def dirichlet(cls) -> "BoundaryConditions":
        return cls(1.0, 0.0, 1.0, 0.0)

    @classmethod
    def neumann(cls) -> "BoundaryConditions":
        return cls(0.0, 1.0, 0.0, 1.0)

    @property
    def initial_data(self) -> tuple[float, float]:
        """``(y(0), y'(0))`` of ``y = b0 s - b1 c``."""
        return -self.beta1, self.beta0

    @property
    def is_real(self) -> bool:
        return all(np.isreal(v) for v in (self.beta0, self.beta1, self.gamma0, self.gamma1))


@dataclass(frozen=True)
class Eigenpair:
    lam: float
    rho: complex
    residual: float


@dataclass
class Spectrum:
    """Eigenvalues found in a range, in increasing order."""

    eigenpairs: list[Eigenpair]
    backend: str
    lambda_range: tuple[float, float]
    warnings: list[str] = field(default_factory=list)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e.lam for e in self.eigenpairs])

    def __len__(self):
        return len(self.eigenpairs)


class CharacteristicFunction:
    """``Delta(lam)`` of a problem for one backend.

    Parameters
    ----------
    problem : Problem
    bc : BoundaryConditions
    backend : {"propagation", "nsbf", "oracle"}
    nsbf_M : int
        Truncation order of the NSBF series for ``y(b)``.
    deriv_M : int
        Truncation order of the derivative series for ``y'(b)``.
    N_max : int
        Length of the coefficient table for the NSBF backend.
    oracle_substeps : int
        RK4 steps per grid interval for the oracle backend.
    """

    def __init__(self, problem: Problem, bc: BoundaryConditions = BoundaryConditions(), backend: str = "propagation",
                 *, nsbf_M: int = 40, deriv_M: int = 20, N_max: int = 120, seed: int = 0,
                 oracle_substeps: int = 32):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        self.problem = problem
        self.bc = bc
        self.backend = backend
        self.nsbf_M = nsbf_M
        self.deriv_M = deriv_M
        self.N_max = N_max
        self.seed = seed
        self.oracle_substeps = oracle_substeps
        self._coeffs = None
        self._dcoeffs = None
        self._oracle = None

    # -- backends ------------------------------------------------------------
    def _endpoint_propagation(self, rho):
        T = transfer_matrix(self.problem, self.problem.iset, rho)
        return T @ np.array(self.bc.initial_data, dtype=complex)

    def _endpoint_oracle(self, rho):
        from .oracle import OracleConfig, _fine_q, _rk4_run

        g = self.problem.grid
        if self._oracle is None:
            S = OracleConfig(substeps=self.oracle_substeps).substeps
            jumps = np.zeros(g.M + 1, dtype=complex)
            for i, a in zip(g.nodes, self.problem.iset.strengths):
                jumps[i] += a
            self._oracle = (_fine_q(self.problem.potential, g, S), jumps, S)
        qf, jumps, S = self._oracle
        y0, dy0 = self.bc.initial_data
        ys, dys, _ = _rk4_run(qf, g.h, complex(rho) ** 2, complex(y0), complex(dy0), 0, g.M, S, jumps)
        return np.array([ys[-1], dys[-1]])

    def _endpoint_nsbf(self, rho):
        from .nsbf import derivative_nsbf_coeffs, derivative_nsbf_eval, fl_coefficients, nsbf_eval

        if self._coeffs is None:
            self._coeffs = fl_coefficients(self.problem, N_max=self.N_max, seed=self.seed)
        b = self.problem.b
        c, s = nsbf_eval(self._coeffs, np.array([rho]), b, self.nsbf_M, h=0.0)
        y0, dy0 = self.bc.initial_data
        y = y0 * c[0] + dy0 * s[0]
        dy = 0j
        if self.bc.gamma1 != 0:
            if self._dcoeffs is None:
                self._dcoeffs = derivative_nsbf_coeffs(self._coeffs, None, self.problem, 0.0, b, self.deriv_M)
            dc, ds = derivative_nsbf_eval(self._dcoeffs, np.array([rho]))
            dy = y0 * dc[0] + dy0 * ds[0]
        return np.array([y, dy])

    def endpoint(self, rho):
        """``(y(b), y'(b))`` at ``rho``."""
        return getattr(self, f"_endpoint_{self.backend}")(complex(rho))

    def at_rho(self, rho) -> complex:
        y, dy = self.endpoint(rho)
        return complex(self.bc.gamma0 * y + self.bc.gamma1 * dy)

    def __call__(self, lam) -> complex:
        lam = complex(lam)
        if lam.imag == 0 and lam.real < 0:
            rho = 1j * math.sqrt(-lam.real)
        else:
            rho = complex(np.sqrt(lam))
        return self.at_rho(rho)


def characteristic_function(problem: Problem, lam, bc: BoundaryConditions = BoundaryConditions(),
                            backend: str = "propagation", **kw) -> complex:
    """``Delta(lam)``; for repeated evaluation build a :class:`CharacteristicFunction`."""
    return CharacteristicFunction(problem, bc, backend, **kw)(lam)


def _roots(fun, grid, xtol):
    vals = np.array([fun(t) for t in grid])
    out = []
    for i in range(len(grid) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0:
            out.append(grid[i])
        elif a * b < 0:
            out.append(brentq(fun, grid[i], grid[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    if vals[-1] == 0:
        out.append(grid[-1])
    return out, vals


def find_eigenvalues(problem: Problem, lambda_range: tuple[float, float], count_target: int | None = None,
                     bc: BoundaryConditions = BoundaryConditions(), backend: str = "propagation",
                     *, char: CharacteristicFunction | None = None, **kw) -> Spectrum:
    """Real eigenvalues in ``lambda_range``.

    For ``lam >= 0`` the scan runs in ``rho`` with step ``pi/(8b)``, for
    ``lam < 0`` in ``lam``.  The scan is repeated at half the step; extra
    sign changes at the finer step raise a :class:`MissedRootsWarning`.
    At most ``count_target`` eigenvalues are returned when given.
    """
    lo, hi = (float(v) for v in lambda_range)
    if not (problem.is_real and bc.is_real):
        raise ValueError("real eigenvalue search needs real data")
    if hi < lo:
        raise ValueError("empty range")
    D = char or CharacteristicFunction(problem, bc, backend, **kw)
    b = problem.b
    notes = []
    found = []
    step = math.pi / (8 * b)

    def scan(fun, a, c, h):
        n = max(3, int(math.ceil((c - a) / h)) + 1)
        n += 1 - n % 2  # odd, so the coarse scan keeps both ends
        grid = np.linspace(a, c, n)
        coarse, _ = _roots(fun, grid[::2], 1e-15)
        fine, vals = _roots(fun, grid, 1e-15)
        if len(fine) != len(coarse):
            notes.append(f"scan step {2 * (grid[1] - grid[0]):.3e} missed {len(fine) - len(coarse)} root(s); "
                         f"refined step used")
        return fine, vals

    scale = 0.0
    if lo < 0:
        neg_hi = min(hi, 0.0)
        lam_step = max((neg_hi - lo) / 400, 1e-12) if neg_hi > lo else 1.0
        r, vals = scan(lambda t: D(t).real, lo, neg_hi, lam_step)
        found += [(t, 1j * math.sqrt(-t)) for t in r if t < 0]
        scale = max(scale, float(np.max(np.abs(vals))))
    if hi >= 0:
        rlo, rhi = math.sqrt(max(lo, 0.0)), math.sqrt(hi)
        r, vals = scan(lambda t: D.at_rho(t).real, rlo, rhi, step / 2)
        found += [(t * t, complex(t)) for t in r if t * t >= lo]
        scale = max(scale, float(np.max(np.abs(vals))))
    found.sort(key=lambda p: p[0])
    # merge duplicates at lam = 0 from both scans
    uniq = []
    for lam, rho in found:
        if uniq and abs(lam - uniq[-1][0]) <= 1e-12 * max(1.0, abs(lam)):
            continue
        uniq.append((lam, rho))
    if count_target is not None:
        uniq = uniq[:count_target]
    pairs = [Eigenpair(float(lam), rho, abs(D(lam))) for lam, rho in uniq]
    tol = 1e-10 * max(scale, 1.0)
    for p in pairs:
        if p.residual > tol:
            notes.append(f"residual {p.residual:.2e} at lam={p.lam:.15g} exceeds {tol:.2e}")
    for n in notes:
        warnings.warn(n, MissedRootsWarning, stacklevel=2)
    if count_target is not None and len(pairs) < count_target:
        notes.append(f"found {len(pairs)} of {count_target} requested eigenvalues")
    return Spectrum(pairs, D.backend, (lo, hi), notes)


def eigenfunction(problem: Problem, lam: float, bc: BoundaryConditions = BoundaryConditions()):
    """Solution ``y = b0 s - b1 c`` at ``lam`` on the whole grid."""
    lam = complex(lam)
    rho = 1j * math.sqrt(-lam.real) if lam.real < 0 else complex(np.sqrt(lam))
    y0, dy0 = bc.initial_data
    return propagate_solution(problem, problem.iset, rho, y0, dy0)
