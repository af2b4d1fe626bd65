"""Foundational types, cumulative quadrature and special functions.

The δ-interaction problem lives on a uniform grid over ``[0, b]`` whose nodes
contain every interaction point.  Integrals are accumulated piecewise between
interaction nodes so that the high-order rule never straddles a kink or a jump.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "DEFAULT_M",
    "DEFAULT_KMAX",
    "DEFAULT_ORDER",
    "GridError",
    "InteractionSet",
    "IndexSequenceSet",
    "Grid",
    "GridFunction",
    "SpectralParameter",
    "StepFunctionSigma",
    "PotentialPrimitive",
    "Potential",
    "ZeroPotential",
    "PolynomialPotential",
    "SampledPotential",
    "Problem",
    "cumulative_integral",
    "legendre_P",
    "legendre_table",
    "spherical_bessel_j",
    "spherical_bessel_table",
]

DEFAULT_M = 2000
DEFAULT_KMAX = 100
DEFAULT_ORDER = 8
SMALL_SEGMENT = 512


class GridError(ValueError):
    """Raised when a grid cannot represent the requested data."""


# ---------------------------------------------------------------------------
# interaction data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InteractionSet:
    """Point interactions ``{(x_k, alpha_k)}`` on ``(0, b)``."""

    points: tuple[float, ...]
    strengths: tuple[complex, ...]
    b: float

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        als = tuple(complex(a) for a in self.strengths)
        b = float(self.b)
        if not b > 0 or not np.isfinite(b):
            raise ValueError("interval length b must be positive and finite")
        if len(pts) != len(als):
            raise ValueError("points and strengths differ in length")
        for k, p in enumerate(pts):
            if not 0.0 < p < b:
                raise ValueError(f"interaction point x_{k + 1}={p} outside (0, b)")
            if k and not pts[k - 1] < p:
                raise ValueError("interaction points must be strictly increasing")
        for k, a in enumerate(als):
            if a == 0 or not np.isfinite(a):
                raise ValueError(f"interaction strength alpha_{k + 1} must be finite and non-zero")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "strengths", als)
        object.__setattr__(self, "b", b)

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def is_real(self) -> bool:
        return all(a.imag == 0 for a in self.strengths)

    def sigma(self, x, side: str = "left"):
        """Step function ``sum alpha_k H(x - x_k)``.

        ``H(0) = 0``, so ``side="left"`` gives the value at a node itself and
        ``side="right"`` the right limit.
        """
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for p, a in zip(self.points, self.strengths):
            out = out + a * ((x > p) if side == "left" else (x >= p))
        return out

    def reflected(self) -> "InteractionSet":
        """Interactions of the problem read from ``b`` towards ``0``."""
        return InteractionSet(
            tuple(self.b - p for p in reversed(self.points)),
            tuple(reversed(self.strengths)),
            self.b,
        )


@dataclass(frozen=True)
class StepFunctionSigma:
    """``sigma(x) = sum alpha_k H(x - x_k)`` bound to its interaction set."""

    iset: InteractionSet

    def __call__(self, x, side: str = "left"):
        return self.iset.sigma(x, side)

    def jumps(self) -> dict[float, complex]:
        return dict(zip(self.iset.points, self.iset.strengths))


class IndexSequenceSet:
    """Strictly increasing index sequences of length 2..N over ``1..N``."""

    def __init__(self, iset: InteractionSet):
        self.iset = iset

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        # lexicographic depth-first walk; indices are 0-based
        N = self.iset.N
        stack = [(j,) for j in reversed(range(N))]
        while stack:
            seq = stack.pop()
            if len(seq) >= 2:
                yield seq
            for j in reversed(range(seq[-1] + 1, N)):
                stack.append(seq + (j,))

    def __len__(self) -> int:
        N = self.iset.N
        return 2**N - N - 1

    def alpha(self, seq: Sequence[int]) -> complex:
        out = 1.0 + 0j
        for j in seq:
            out *= self.iset.strengths[j]
        return out


# ---------------------------------------------------------------------------
# grid and sampled functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[0, b]`` with ``M`` intervals and interaction nodes."""

    b: float
    M: int
    nodes: tuple[int, ...] = ()

    def __post_init__(self):
        if self.M + 1 < 5:
            raise GridError("grid too coarse")
        last = 0
        for i in tuple(self.nodes) + (self.M,):
            if i - last < 4:
                raise GridError("grid too coarse: fewer than 5 nodes between interaction points")
            last = i

    @classmethod
    def for_interactions(cls, iset: InteractionSet, M: int = DEFAULT_M) -> "Grid":
        """Grid whose nodes contain every ``x_k``; non-representable points are rejected."""
        h = iset.b / M
        nodes = []
        for k, p in enumerate(iset.points):
            i = int(round(p / h))
            if abs(i * h - p) > 1e-12 * iset.b:
                raise GridError(
                    f"interaction point x_{k + 1}={p!r} is not a node of the grid with M={M}"
                )
            nodes.append(i)
        return cls(iset.b, M, tuple(nodes))

    @property
    def h(self) -> float:
        return self.b / self.M

    @cached_property
    def x(self) -> np.ndarray:
        out = np.arange(self.M + 1) * self.h
        out[-1] = self.b
        return out

    def x_as(self, dtype) -> np.ndarray:
        """Node coordinates evaluated in ``dtype`` (e.g. ``np.longdouble``)."""
        dtype = np.dtype(dtype)
        real = np.finfo(dtype).dtype
        return np.arange(self.M + 1, dtype=real) * (real.type(self.b) / real.type(self.M))

    def index_of(self, x: float) -> int:
        i = int(round(x / self.h))
        if not 0 <= i <= self.M or abs(i * self.h - x) > 1e-9 * self.h:
            raise GridError(f"x={x!r} is not a grid node")
        return i

    def segments(self) -> list[tuple[int, int]]:
        pts = (0,) + tuple(self.nodes) + (self.M,)
        return list(zip(pts[:-1], pts[1:]))


@dataclass(frozen=True)
class GridFunction:
    """Samples on a :class:`Grid` with optional left limits at jump nodes.

    ``values`` hold right limits at the interaction nodes; ``left`` maps node
    indices to the left limit where the function jumps there.
    """

    values: np.ndarray
    grid: Grid
    left: Mapping[int, complex] = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values)
        if v.shape[-1] != self.grid.M + 1:
            raise GridError("sample count does not match grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def step(self) -> float:
        return self.grid.h

    def left_values(self) -> np.ndarray:
        out = np.array(self.values)
        for i, v in self.left.items():
            out[..., i] = v
        return out


# ---------------------------------------------------------------------------
# cumulative quadrature
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _interval_weights(p: int) -> tuple[Fraction, ...]:
    """Exact weights ``W[r][i] = int_r^{r+1} l_i`` for the p-point Lagrange basis on 0..p-1."""
    rows = []
    for r in range(p - 1):
        A = [[Fraction(i) ** e for i in range(p)] for e in range(p)]
        m = [(Fraction(r + 1) ** (e + 1) - Fraction(r) ** (e + 1)) / (e + 1) for e in range(p)]
        A = [row + [m[e]] for e, row in enumerate(A)]
        for c in range(p):
            piv = next(i for i in range(c, p) if A[i][c] != 0)
            A[c], A[piv] = A[piv], A[c]
            for i in range(p):
                if i != c and A[i][c] != 0:
                    fac = A[i][c] / A[c][c]
                    A[i] = [a - fac * b for a, b in zip(A[i], A[c])]
        rows.append(tuple(A[i][p] / A[i][i] for i in range(p)))
    return tuple(rows)


@lru_cache(maxsize=None)
def _weights_array(p: int, extended: bool) -> np.ndarray:
    rows = _interval_weights(p)
    if not extended:
        return np.array([[float(w) for w in row] for row in rows])
    ld = np.longdouble
    return np.array([[ld(w.numerator) / ld(w.denominator) for w in row] for row in rows], dtype=ld)


def _is_extended(dtype) -> bool:
    return np.dtype(dtype) in (np.dtype(np.longdouble), np.dtype(np.clongdouble)) and (
        np.finfo(np.longdouble).eps < np.finfo(float).eps
    )


@lru_cache(maxsize=256)
def _window_index(n: int, p: int) -> np.ndarray:
    return np.arange(n - p + 1)[:, None] + np.arange(p)[None, :]


@lru_cache(maxsize=128)
def _increment_matrix(n: int, p: int, dtype=np.float64) -> np.ndarray:
    """Dense ``(n, n-1)`` map from samples to interval integrals (double precision)."""
    W = _weights_array(p, False)
    half = p // 2 - 1
    B = np.zeros((n - 1, n))
    for i in range(n - 1):
        if i < half:
            B[i, :p] = W[i]
        elif i > n - p + half:
            B[i, n - p :] = W[i - (n - p)]
        else:
            B[i, i - half : i - half + p] = W[half]
    return np.ascontiguousarray(B.T, dtype=dtype)


def _segment_increments(g: np.ndarray, p: int) -> np.ndarray:
    """Per-interval integrals (unit spacing) of samples ``g`` along the last axis."""
    n = g.shape[-1]
    p = min(p, n)
    extended = _is_extended(g.dtype)
    if not extended and n <= SMALL_SEGMENT:
        # short segments: one BLAS product beats the windowed evaluation
        return g @ _increment_matrix(n, p, np.complex128 if np.iscomplexobj(g) else np.float64)
    W = _weights_array(p, extended)
    half = p // 2 - 1
    win = g[..., _window_index(n, p)]
    out = np.empty(g.shape[:-1] + (n - 1,), dtype=np.result_type(g, W))
    out[..., half : n - p + half + 1] = win @ W[half]
    # intervals near the ends use the first and last windows off-centre
    out[..., :half] = win[..., 0, :] @ W[:half].T
    out[..., n - p + half + 1 :] = win[..., -1, :] @ W[half + 1 :].T
    return out


def _cumint(values, h, breaks, left=None, order=DEFAULT_ORDER) -> np.ndarray:
    values = np.asarray(values)
    if np.issubdtype(values.dtype, np.integer):
        values = values.astype(float)
    n = values.shape[-1]
    if n < 5:
        raise GridError("grid too coarse")
    pts = [0] + [i for i in breaks if 0 < i < n - 1] + [n - 1]
    incr = np.empty(values.shape[:-1] + (n - 1,), dtype=np.result_type(values, float))
    for a, b in zip(pts[:-1], pts[1:]):
        seg = values[..., a : b + 1]
        if left is not None and b in left:
            seg = np.array(seg)
            seg[..., -1] = left[b]
        if b - a + 1 < 5:
            raise GridError("grid too coarse")
        incr[..., a:b] = _segment_increments(seg, order)
    out = np.zeros(values.shape, dtype=incr.dtype)
    out[..., 1:] = np.cumsum(incr, axis=-1)
    return out * h


def cumulative_integral(g, grid: Grid | None = None, *, order: int = DEFAULT_ORDER, left=None):
    """Running integral ``G(x_j) = int_0^{x_j} g``.

    Parameters
    ----------
    g : GridFunction or ndarray
        Samples on the full grid; arrays may carry leading batch axes.
    grid : Grid, optional
        Required when ``g`` is a plain array.
    order : int
        Number of points of the local Lagrange rule (global order of accuracy).
    left : mapping, optional
        Left limits at interaction nodes for integrands with jumps there;
        taken from ``g.left`` for grid functions.

    Returns
    -------
    GridFunction or ndarray
        Same kind as the input, with ``G(0) = 0``.
    """
    if isinstance(g, GridFunction):
        out = _cumint(g.values, _step(g.grid, g.values), g.grid.nodes, g.left or left, order)
        return GridFunction(out, g.grid)
    if grid is None:
        raise TypeError("grid required for array input")
    return _cumint(g, _step(grid, g), grid.nodes, left, order)


def _step(grid: Grid, values):
    # spacing in the working precision of the samples
    if _is_extended(np.asarray(values).dtype):
        return np.longdouble(grid.b) / np.longdouble(grid.M)
    return grid.h


# ---------------------------------------------------------------------------
# spectral parameter and potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralParameter:
    """Spectral parameter stored through ``rho``; ``lam = rho**2``."""

    rho: complex

    @property
    def lam(self) -> complex:
        return self.rho * self.rho

    @classmethod
    def from_lambda(cls, lam: complex) -> "SpectralParameter":
        lam = complex(lam)
        if lam.imag == 0 and lam.real < 0:
            return cls(1j * np.sqrt(-lam.real))
        return cls(complex(np.sqrt(lam)))


class Potential:
    """Regular part ``q`` of the potential."""

    is_zero = False

    def __call__(self, x):
        raise NotImplementedError

    def sample(self, grid: Grid) -> np.ndarray:
        return np.asarray(self(grid.x), dtype=complex)

    def reflected(self, b: float) -> "Potential":
        raise NotImplementedError

    @property
    def is_real(self) -> bool:
        return True


class ZeroPotential(Potential):
    is_zero = True

    def __call__(self, x):
        return np.zeros(np.shape(x), dtype=complex)

    def reflected(self, b):
        return self

    def __repr__(self):
        return "ZeroPotential()"


class PolynomialPotential(Potential):
    """``q(x) = sum c_i x**i`` (ascending coefficients)."""

    def __init__(self, coeffs: Sequence[complex]):
        c = np.array(coeffs, dtype=complex)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("polynomial potential needs at least one coefficient")
        self.coeffs = c
        self.is_zero = bool(np.all(c == 0))

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)

    def reflected(self, b):
        # q(b - x) expanded in powers of x
        P = np.polynomial.Polynomial(self.coeffs)
        return PolynomialPotential(P(np.polynomial.Polynomial([b, -1.0])).coef)

    @property
    def is_real(self):
        return bool(np.all(self.coeffs.imag == 0))

    def __repr__(self):
        return f"PolynomialPotential({self.coeffs.tolist()!r})"


class SampledPotential(Potential):
    """Potential given by samples on the uniform grid of ``[0, b]``.

    Off-node values use local four-point Lagrange interpolation.
    """

    def __init__(self, values: Sequence[complex], b: float):
        v = np.array(values, dtype=complex)
        if v.ndim != 1 or v.size < 5:
            raise ValueError("sampled potential needs at least 5 samples")
        self.values = v
        self.b = float(b)
        self.is_zero = bool(np.all(v == 0))

    def sample(self, grid):
        if grid.M + 1 != self.values.size:
            raise GridError(
                f"sampled potential has {self.values.size} values, grid has {grid.M + 1} nodes"
            )
        return self.values.copy()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        M = self.values.size - 1
        u = x / self.b * M
        i0 = np.clip(np.floor(u).astype(int) - 1, 0, M - 3)
        t = u - i0
        out = np.zeros(x.shape, dtype=complex)
        for j in range(4):
            lj = np.ones(x.shape)
            for m in range(4):
                if m != j:
                    lj = lj * (t - m) / (j - m)
            out = out + lj * self.values[i0 + j]
        return out

    def reflected(self, b):
        return SampledPotential(self.values[::-1], self.b)

    @property
    def is_real(self):
        return bool(np.all(self.values.imag == 0))


@dataclass(frozen=True)
class PotentialPrimitive:
    """``w(y, x) = 1/2 int_y^x q`` tabulated on the grid."""

    w0: np.ndarray
    grid: Grid

    @classmethod
    def from_samples(cls, q: np.ndarray, grid: Grid) -> "PotentialPrimitive":
        return cls(0.5 * cumulative_integral(np.asarray(q, dtype=complex), grid), grid)

    def w(self, iy, ix):
        return self.w0[ix] - self.w0[iy]


@dataclass(frozen=True)
class Problem:
    """Interactions, regular potential and grid resolution of one problem."""

    iset: InteractionSet
    potential: Potential = field(default_factory=ZeroPotential)
    M: int = DEFAULT_M

    @cached_property
    def grid(self) -> Grid:
        return Grid.for_interactions(self.iset, self.M)

    @cached_property
    def q(self) -> np.ndarray:
        return self.potential.sample(self.grid)

    @property
    def b(self) -> float:
        return self.iset.b

    @cached_property
    def primitive(self) -> PotentialPrimitive:
        return PotentialPrimitive.from_samples(self.q, self.grid)

    @property
    def is_real(self) -> bool:
        return self.iset.is_real and self.potential.is_real

    def reflected(self) -> "Problem":
        return Problem(self.iset.reflected(), self.potential.reflected(self.b), self.M)


# ---------------------------------------------------------------------------
# Legendre polynomials
# ---------------------------------------------------------------------------


def legendre_table(nmax: int, z) -> np.ndarray:
    """Values ``P_0(z) .. P_nmax(z)`` by the three-term recurrence, shape (nmax+1, ...)."""
    z = np.clip(np.asarray(z, dtype=float), -1.0, 1.0)
    out = np.empty((nmax + 1,) + z.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = z
    for n in range(1, nmax):
        out[n + 1] = ((2 * n + 1) * z * out[n] - n * out[n - 1]) / (n + 1)
    return out


def legendre_P(n: int, z):
    """Legendre polynomial ``P_n(z)``; ``z`` is clamped into [-1, 1]."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    out = legendre_table(n, z)[n]
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# spherical Bessel functions
# ---------------------------------------------------------------------------


def _sph_jn_series(n: int, z, terms: int = 40):
    """Ascending series ``z**n/(2n+1)!! * sum (-z**2/2)**k / (k! (2n+3)...(2n+2k+1))``."""
    z = np.asarray(z, dtype=complex)
    pref = np.ones_like(z)
    for m in range(1, n + 1):
        pref = pref * z / (2 * m + 1)
    t = np.ones_like(z)
    s = np.ones_like(z)
    w = -0.5 * z * z
    for k in range(1, terms):
        t = t * w / (k * (2 * n + 2 * k + 1))
        s = s + t
    return pref * s


def _sph_jn_upward(nmax: int, z) -> np.ndarray:
    """Upward recurrence from ``j_0, j_1``; accurate only for ``n`` up to about ``|z|``."""
    z = np.asarray(z, dtype=complex)
    out = np.empty((nmax + 1,) + z.shape, dtype=complex)
    out[0] = np.sin(z) / z
    if nmax >= 1:
        out[1] = (out[0] - np.cos(z)) / z
    for n in range(1, nmax):
        out[n + 1] = (2 * n + 1) / z * out[n] - out[n - 1]
    return out


def spherical_bessel_table(nmax: int, z) -> np.ndarray:
    """Spherical Bessel functions ``j_0(z) .. j_nmax(z)``, shape (nmax+1, ...).

    Upward recurrence is used where ``|z| >= nmax`` (stable there); otherwise
    the ratios ``j_k / j_{k-1}`` come from a backward continued-fraction sweep
    and are anchored on whichever of ``j_0``, ``j_1`` is larger.  Small
    arguments use the ascending series for the anchors.
    """
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    zf = z.ravel()
    out = np.zeros((nmax + 1, zf.size), dtype=complex)
    az = np.abs(zf)
    small = az < 0.5
    zs = np.where(small, 1.0, zf)
    j0 = np.where(small, _sph_jn_series(0, zf, 16), np.sin(zs) / zs)
    j1 = np.where(small, _sph_jn_series(1, zf, 16), (np.sin(zs) / zs - np.cos(zs)) / zs)
    out[0] = j0
    if nmax >= 1:
        out[1] = j1
    if nmax >= 2:
        up = az >= nmax
        if np.any(up):
            out[:, up] = _sph_jn_upward(nmax, zf[up])
        dn = ~up
        if np.any(dn):
            zd = zf[dn]
            start = nmax + int(np.max(az[dn])) + 40 + int(np.sqrt(40 * nmax))
            r = np.zeros_like(zd)
            ratios = np.empty((nmax + 1, zd.size), dtype=complex)
            for k in range(start, 0, -1):
                r = zd / (2 * k + 1 - zd * r)
                if k <= nmax:
                    ratios[k] = r
            a0 = np.abs(j0[dn]) >= np.abs(j1[dn])
            from0 = j0[dn] * np.cumprod(ratios[1:], axis=0)
            from1 = j1[dn] * np.cumprod(ratios[2:], axis=0)
            block = np.empty((nmax + 1, zd.size), dtype=complex)
            block[0] = j0[dn]
            block[1] = np.where(a0, from0[0], j1[dn])
            block[2:] = np.where(a0, from0[1:], from1)
            out[:, dn] = block
    return out.reshape((nmax + 1,) + shape)


def spherical_bessel_j(n: int, z):
    """Spherical Bessel function ``j_n(z)`` of the first kind for complex ``z``."""
    if n < 0:
        raise ValueError("order must be non-negative")
    out = spherical_bessel_table(n, z)[n]
    return complex(out) if out.ndim == 0 else out
