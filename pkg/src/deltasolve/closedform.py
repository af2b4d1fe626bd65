"""Solutions of the δ-interaction equation assembled from regular sub-solutions.

Two independent constructions are provided: the explicit sum over increasing
index sequences, and segment-by-segment propagation with interface matching.
Both rest on :class:`RegularSolver`, which solves the equation without
interactions by SPPS on short chunks of the grid (or by RK4).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_M,
    Grid,
    InteractionSet,
    Potential,
    Problem,
    SampledPotential,
    ZeroPotential,
)
from .spps import formal_powers, nonvanishing_solution, spps_solution

__all__ = [
    "RegularSolver",
    "ShiftedSineFamily",
    "AssembledSolution",
    "as_problem",
    "regular_solver",
    "shifted_sine_solutions",
    "assemble_sum_over_J",
    "closed_form_solution",
    "propagate_solution",
    "e_solution",
    "c_solution",
    "s_solution",
    "transfer_matrix",
    "SMALL_RHO",
    "MAX_ENUMERATION",
]

CHUNK = 128
CHUNK_KMAX = 100
SMALL_RHO = 1e-3
MAX_ENUMERATION = 20
BACKENDS = ("spps", "oracle")


def as_problem(q, iset: InteractionSet, M: int = DEFAULT_M) -> Problem:
    """Wrap a potential given as Problem, Potential, callable, samples or None."""
    if isinstance(q, Problem):
        return q
    if q is None:
        pot = ZeroPotential()
    elif isinstance(q, Potential):
        pot = q
    elif callable(q):
        pot = _CallablePotential(q)
    else:
        q = np.asarray(q)
        M = q.size - 1
        pot = SampledPotential(q, iset.b)
    return Problem(iset, pot, M)


class _CallablePotential(Potential):
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, x):
        return np.broadcast_to(np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=complex), np.shape(x))

    @property
    def is_real(self):
        return False


def _sinc_t(rho, t):
    """``sin(rho t)/rho`` with the ``rho -> 0`` limit ``t``."""
    return t * np.sinc(rho * t / np.pi)


# ---------------------------------------------------------------------------
# regular solver
# ---------------------------------------------------------------------------


def _plan_chunks(grid: Grid, size: int) -> list[tuple[int, int]]:
    out = []
    for a, b in grid.segments():
        n = -(-(b - a) // size)
        cuts = np.linspace(a, b, n + 1).round().astype(int)
        out.extend(zip(cuts[:-1].tolist(), cuts[1:].tolist()))
    return out


# a chunk of length L is used while |rho| L stays below this value
CHUNK_RHO_L = 12.0
MIN_CHUNK = 8


class _ChunkLevel:
    """Chunk layout with its formal power tables and a small per-rho cache."""

    def __init__(self, problem: Problem, size: int, K_max: int):
        self.size = size
        self.chunks = _plan_chunks(problem.grid, size)
        self.starts = {a: i for i, (a, _) in enumerate(self.chunks)}
        self.length = max(problem.grid.x[b] - problem.grid.x[a] for a, b in self.chunks)
        q = problem.q
        x = problem.grid.x
        self.tables = []
        for a, b in self.chunks:
            g = Grid(float(x[b] - x[a]), b - a)
            nv = nonvanishing_solution(q[a : b + 1], InteractionSet((), (), g.b), grid=g, extended=False)
            self.tables.append(formal_powers(nv, K_max))
        self.cache: OrderedDict = OrderedDict()

    def basis(self, rho: complex):
        """Per-chunk ``(u0, u1, u0', u1', h)``."""
        if rho in self.cache:
            self.cache.move_to_end(rho)
            return self.cache[rho]
        out = []
        for tab in self.tables:
            sp = spps_solution(tab, rho)
            out.append((sp.u0, sp.u1, sp.d_u0, sp.d_u1, tab.h))
        self.cache[rho] = out
        if len(self.cache) > 8:
            self.cache.popitem(last=False)
        return out

    def end_matrices(self, rho: complex) -> np.ndarray:
        mats = np.empty((len(self.chunks), 2, 2), dtype=complex)
        for i, tab in enumerate(self.tables):
            u0, u1, du0, du1 = _spps_end(tab, rho)
            h = tab.h
            mats[i] = [[u0 - h * u1, u1], [du0 - h * du1, du1]]
        return mats


class RegularSolver:
    """Solver of ``-y'' + q y = rho**2 y`` without interactions on the grid of a problem.

    The SPPS backend splits the grid into chunks that never straddle an
    interaction node, builds formal powers for each chunk once, and chains the
    chunk solutions.  Chunks hold at most ``chunk`` intervals; for large
    ``|rho|`` a finer layout is built so that ``|rho|`` times the chunk length
    stays moderate.  For ``q = 0`` the trigonometric solutions are used
    directly.

    Parameters
    ----------
    problem : Problem
    backend : {"spps", "oracle"}
    chunk : int
        Maximal number of grid intervals per chunk.
    """

    def __init__(self, problem: Problem, backend: str = "spps", chunk: int = CHUNK, K_max: int = CHUNK_KMAX):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        self.problem = problem
        self.grid = problem.grid
        self.backend = backend
        self.K_max = K_max
        self.chunk = chunk
        self.zero = bool(problem.potential.is_zero)
        self._starts = {0, *self.grid.nodes}
        self._levels: dict[int, _ChunkLevel] = {}
        self._qfine = None

    def level(self, rho: complex = 0.0) -> _ChunkLevel:
        """Chunk layout used at ``rho``."""
        size = self.chunk
        while size > MIN_CHUNK and abs(rho) * size * self.grid.h > CHUNK_RHO_L:
            size //= 2
        size = max(size, MIN_CHUNK)
        if size not in self._levels:
            self._levels[size] = _ChunkLevel(self.problem, size, self.K_max)
        return self._levels[size]

    @property
    def chunks(self):
        return _plan_chunks(self.grid, self.chunk)

    # -- solving -------------------------------------------------------------
    def solve(self, rho: complex, y: complex, dy: complex, start: int = 0):
        """Values and derivatives on nodes ``start..M`` for data ``(y, dy)`` at node ``start``.

        ``start`` must be ``0`` or an interaction node.
        """
        rho = complex(rho)
        g = self.grid
        if start not in self._starts:
            raise ValueError("start must be 0 or an interaction node")
        if self.zero:
            t = g.x[start:] - g.x[start]
            c = np.cos(rho * t)
            s = _sinc_t(rho, t)
            return y * c + dy * s, -rho * rho * y * s + dy * c
        if self.backend == "oracle":
            return rk_regular_cached(self, rho, y, dy, start)
        lev = self.level(rho)
        basis = lev.basis(rho)
        first = lev.starts[start]
        n = g.M + 1 - start
        ys = np.empty(n, dtype=complex)
        dys = np.empty(n, dtype=complex)
        yc, dyc = complex(y), complex(dy)
        for (a, b), (u0, u1, du0, du1, h) in zip(lev.chunks[first:], basis[first:]):
            c1 = dyc - h * yc
            ys[a - start : b - start + 1] = yc * u0 + c1 * u1
            dys[a - start : b - start + 1] = yc * du0 + c1 * du1
            yc, dyc = ys[b - start], dys[b - start]
        return ys, dys

    def chunk_end_matrices(self, rho: complex):
        """``(chunks, mats)``: 2x2 matrices mapping ``(y, y')`` at each chunk start to its end."""
        rho = complex(rho)
        x = self.grid.x
        if self.zero or self.backend == "oracle":
            chunks = self.chunks
            mats = np.empty((len(chunks), 2, 2), dtype=complex)
            for i, (a, b) in enumerate(chunks):
                if self.zero:
                    t = x[b] - x[a]
                    c, s = np.cos(rho * t), _sinc_t(rho, t)
                    mats[i] = [[c, s], [-rho * rho * s, c]]
                else:
                    y1, d1 = self._solve_local_oracle(rho, a, b, 1.0, 0.0)
                    y2, d2 = self._solve_local_oracle(rho, a, b, 0.0, 1.0)
                    mats[i] = [[y1, y2], [d1, d2]]
            return chunks, mats
        lev = self.level(rho)
        return lev.chunks, lev.end_matrices(rho)

    def transfer(self, rho: complex) -> np.ndarray:
        """Matrix mapping ``(y(0), y'(0))`` to ``(y(b), y'(b))`` through all interactions."""
        chunks, mats = self.chunk_end_matrices(rho)
        jumps = dict(zip(self.grid.nodes, self.problem.iset.strengths))
        T = np.eye(2, dtype=complex)
        for (a, _), m in zip(chunks, mats):
            if a in jumps:
                T = np.array([[1.0, 0.0], [jumps[a], 1.0]]) @ T
            T = m @ T
        return T

    def _fine(self):
        from .oracle import OracleConfig, _fine_q

        if self._qfine is None:
            self._qfine = _fine_q(self.problem.potential, self.grid, OracleConfig().substeps)
        return self._qfine

    def _solve_local_oracle(self, rho, a, b, y, dy):
        from .oracle import OracleConfig, _rk4_run

        jumps = np.zeros(self.grid.M + 1, dtype=complex)
        ys, dys, _ = _rk4_run(self._fine(), self.grid.h, rho * rho, complex(y), complex(dy), a, b,
                              OracleConfig().substeps, jumps)
        return ys[-1], dys[-1]


def rk_regular_cached(solver: RegularSolver, rho, y, dy, start):
    from .oracle import rk_regular

    return rk_regular(None, solver.grid, rho * rho, y, dy, start, qfine=solver._fine())


def _spps_end(tab, rho):
    """SPPS solution values at the right end of a chunk only."""
    from .spps import _default_terms

    T = _default_terms(tab, rho)
    lam = rho * rho
    ce = np.empty(T, dtype=complex)
    co = np.empty(T, dtype=complex)
    ce[0] = co[0] = 1.0
    for k in range(1, T):
        ce[k] = ce[k - 1] * (-lam) / ((2 * k - 1) * (2 * k))
        co[k] = co[k - 1] * (-lam) / ((2 * k) * (2 * k + 1))
    end = tab.__dict__.get("_end")
    if end is None:
        end = (tab.phi64[:, -1].copy(), tab.psi64[:, -1].copy(), tab.log_derivative[0][-1])
        tab.__dict__["_end"] = end
    phi, psi, ld = end
    u0 = ce @ phi[0 : 2 * T : 2]
    u1 = co @ phi[1 : 2 * T : 2]
    s0 = (ce[1:T] * (2 * np.arange(1, T))) @ psi[1 : 2 * T - 2 : 2] if T > 1 else 0.0
    s1 = ce @ psi[0 : 2 * T - 1 : 2]
    return u0, u1, ld * u0 + s0, ld * u1 + s1


def regular_solver(q, iset: InteractionSet, *, M: int = DEFAULT_M, backend: str = "spps") -> RegularSolver:
    """Regular solver attached to (and cached on) the problem built from ``q``."""
    problem = as_problem(q, iset, M)
    cache = problem.__dict__.setdefault("_solvers", {})
    if backend not in cache:
        cache[backend] = RegularSolver(problem, backend)
    return cache[backend]


# ---------------------------------------------------------------------------
# assembled solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AssembledSolution:
    """Solution values ``u`` and derivatives ``du`` at the grid nodes.

    ``du`` holds right limits; ``du_left`` maps each interaction node index to
    the left limit of the derivative there.
    """

    u: np.ndarray
    du: np.ndarray
    du_left: dict
    grid: Grid
    provenance: str

    def du_left_values(self) -> np.ndarray:
        out = np.array(self.du)
        for i, v in self.du_left.items():
            out[i] = v
        return out

    def jumps(self) -> dict:
        return {i: self.du[i] - v for i, v in self.du_left.items()}

    def __neg__(self):
        return AssembledSolution(-self.u, -self.du, {i: -v for i, v in self.du_left.items()}, self.grid, self.provenance)

    def combine(self, other: "AssembledSolution", a: complex, b: complex, provenance: str | None = None):
        """``a * self + b * other``."""
        return AssembledSolution(
            a * self.u + b * other.u,
            a * self.du + b * other.du,
            {i: a * v + b * other.du_left[i] for i, v in self.du_left.items()},
            self.grid,
            provenance or self.provenance,
        )


@dataclass(frozen=True, eq=False)
class ShiftedSineFamily:
    """``s_k(rho, x - x_k)`` and its derivative on nodes ``node_k..M`` for each interaction."""

    rho: complex
    starts: tuple[int, ...]
    s: tuple[np.ndarray, ...]
    ds: tuple[np.ndarray, ...]

    def value(self, k: int, offset: int) -> complex:
        return self.s[k][offset]


def shifted_sine_solutions(q, iset: InteractionSet, rho: complex, *, M: int = DEFAULT_M,
                           backend: str = "spps", solver: RegularSolver | None = None) -> ShiftedSineFamily:
    """Solutions of the regular equation started at each ``x_k`` with data ``(0, 1)``."""
    solver = solver or regular_solver(q, iset, M=M, backend=backend)
    s, ds = [], []
    for i in solver.grid.nodes:
        a, b = solver.solve(rho, 0.0, 1.0, start=i)
        s.append(a)
        ds.append(b)
    return ShiftedSineFamily(complex(rho), tuple(solver.grid.nodes), tuple(s), tuple(ds))


def _sequence_coefficients(ut_at, family: ShiftedSineFamily, iset: InteractionSet) -> np.ndarray:
    """``C_j``: sum over all increasing sequences ending at ``j`` of ``alpha_J u(x_j1) prod s``.

    Depth-first lexicographic enumeration with the running product carried
    along each prefix.
    """
    N = iset.N
    al = iset.strengths
    st = family.starts
    C = np.zeros(N, dtype=complex)
    stack = [(j, al[j] * ut_at[j]) for j in range(N - 1, -1, -1)]
    while stack:
        j, P = stack.pop()
        C[j] += P
        sj = family.s[j]
        for m in range(N - 1, j, -1):
            stack.append((m, P * al[m] * sj[st[m] - st[j]]))
    return C


def assemble_sum_over_J(utilde, utilde_values_at_xk, family: ShiftedSineFamily, iset: InteractionSet,
                        grid: Grid | None = None) -> AssembledSolution:
    """Closed-form solution from the regular solution ``utilde`` and shifted sines.

    ``u = utilde + sum_k alpha_k utilde(x_k) H s_k + sum_J alpha_J H utilde(x_j1) prod s ... s``.

    Parameters
    ----------
    utilde : tuple of ndarray
        ``(values, derivatives)`` of the regular solution at the grid nodes.
    utilde_values_at_xk : sequence of complex
        ``utilde(x_k)``.
    """
    if iset.N > MAX_ENUMERATION:
        raise ValueError("sequence enumeration too large; use propagation")
    u, du = (np.array(v, dtype=complex) for v in utilde)
    if grid is None:
        raise TypeError("grid required")
    C = _sequence_coefficients(list(utilde_values_at_xk), family, iset)
    left = {}
    for j, i in enumerate(family.starts):
        left[i] = du[i]
        u[i:] += C[j] * family.s[j]
        du[i:] += C[j] * family.ds[j]
    # left limits exclude the terms switched on at the node itself
    for j, i in enumerate(family.starts):
        left[i] = du[i] - C[j] * family.ds[j][0]
    return AssembledSolution(u, du, left, grid, "sum-over-J")


def closed_form_solution(q, iset, rho, u0, u1, *, M=DEFAULT_M, backend="spps", solver=None):
    """Cauchy problem ``u(0) = u0, u'(0) = u1`` by the sum over index sequences."""
    solver = solver or regular_solver(q, iset, M=M, backend=backend)
    ut = solver.solve(rho, u0, u1)
    fam = shifted_sine_solutions(q, iset, rho, solver=solver)
    at = [ut[0][i] for i in solver.grid.nodes]
    return assemble_sum_over_J(ut, at, fam, iset, solver.grid)


def propagate_solution(q, iset: InteractionSet, rho: complex, u0: complex, u1: complex, *,
                       M: int = DEFAULT_M, backend: str = "spps", solver: RegularSolver | None = None) -> AssembledSolution:
    """Cauchy problem solved interval by interval with derivative jumps at each ``x_k``."""
    solver = solver or regular_solver(q, iset, M=M, backend=backend)
    g = solver.grid
    u = np.empty(g.M + 1, dtype=complex)
    du = np.empty(g.M + 1, dtype=complex)
    left = {}
    pts = (0,) + tuple(g.nodes)
    y, dy = complex(u0), complex(u1)
    for k, a in enumerate(pts):
        if k > 0:
            left[a] = dy
            dy = dy + iset.strengths[k - 1] * y
        stop = pts[k + 1] if k + 1 < len(pts) else g.M
        ys, dys = solver.solve(rho, y, dy, start=a)
        u[a : stop + 1] = ys[: stop - a + 1]
        du[a : stop + 1] = dys[: stop - a + 1]
        y, dy = u[stop], du[stop]
    return AssembledSolution(u, du, left, g, "propagation")


def _solve(q, iset, rho, u0, u1, method, M, backend, solver):
    if method == "auto":
        method = "sum" if iset.N <= MAX_ENUMERATION else "propagation"
    if method == "sum":
        return closed_form_solution(q, iset, rho, u0, u1, M=M, backend=backend, solver=solver)
    if method == "propagation":
        return propagate_solution(q, iset, rho, u0, u1, M=M, backend=backend, solver=solver)
    raise ValueError(f"unknown method {method!r}")


def e_solution(q, iset: InteractionSet, rho: complex, h: complex = 0.0, *, M: int = DEFAULT_M,
               backend: str = "spps", method: str = "auto", solver=None) -> AssembledSolution:
    """Solution with data ``e(0) = 1``, ``e'(0) = i rho + h``."""
    rho = complex(rho)
    return _solve(q, iset, rho, 1.0, 1j * rho + h, method, M, backend, solver)


def c_solution(q, iset: InteractionSet, rho: complex, h: complex = 0.0, *, M: int = DEFAULT_M,
               backend: str = "spps", method: str = "auto", solver=None) -> AssembledSolution:
    """``c = (e(rho) + e(-rho))/2``: data ``(1, h)``."""
    rho = complex(rho)
    ep = e_solution(q, iset, rho, h, M=M, backend=backend, method=method, solver=solver)
    if rho == 0:
        return ep
    em = e_solution(q, iset, -rho, h, M=M, backend=backend, method=method, solver=solver)
    return ep.combine(em, 0.5, 0.5)


def s_solution(q, iset: InteractionSet, rho: complex, h: complex = 0.0, *, M: int = DEFAULT_M,
               backend: str = "spps", method: str = "auto", solver=None) -> AssembledSolution:
    """``s = (e(rho) - e(-rho))/(2 i rho)``: data ``(0, 1)``.

    For ``|rho| < SMALL_RHO`` the quotient cancels badly and the Cauchy
    problem is solved directly.
    """
    rho = complex(rho)
    if abs(rho) < SMALL_RHO:
        return _solve(q, iset, rho, 0.0, 1.0, method, M, backend, solver)
    ep = e_solution(q, iset, rho, h, M=M, backend=backend, method=method, solver=solver)
    em = e_solution(q, iset, -rho, h, M=M, backend=backend, method=method, solver=solver)
    d = 2j * rho
    return ep.combine(em, 1 / d, -1 / d)


def transfer_matrix(q, iset: InteractionSet, rho: complex, *, M: int = DEFAULT_M,
                    backend: str = "spps", solver=None) -> np.ndarray:
    """Matrix mapping ``(y(0), y'(0))`` to ``(y(b), y'(b))`` through all interactions."""
    solver = solver or regular_solver(q, iset, M=M, backend=backend)
    return solver.transfer(rho)
