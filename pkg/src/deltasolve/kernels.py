"""Exact transmutation kernels for ``q = 0`` with point interactions.

For a vanishing regular potential the kernel ``K(x, t)`` is a finite sum of
convolutions of characteristic functions, hence a piecewise polynomial in
``t``.  Shapes are convolved exactly in rational arithmetic; the complex
interaction weights multiply the exact real shapes only when a float
representation is assembled.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .core import IndexSequenceSet, InteractionSet

__all__ = [
    "PiecewisePoly",
    "PiecewisePolyKernel",
    "TransmutedValue",
    "GoursatReport",
    "conv_piecewise_poly",
    "exact_kernel_q0",
    "apply_transmutation",
    "goursat_check",
    "kernel_samples",
]


# ---------------------------------------------------------------------------
# exact polynomial helpers (coefficient lists, ascending powers of t)
# ---------------------------------------------------------------------------


def _padd(p, q):
    n = max(len(p), len(q))
    return [(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)]


def _pscale(p, c):
    return [c * v for v in p]


def _peval(p, t):
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * t + c
    return acc


def _ppow_linear(alpha, beta, n):
    """Coefficients of ``(alpha + beta t)**n``."""
    return [comb(n, r) * alpha ** (n - r) * beta**r for r in range(n + 1)]


def _taylor_shift(p, a):
    """Coefficients of ``p(a + u)`` in powers of ``u``."""
    out = [Fraction(0)] * len(p)
    for m, c in enumerate(p):
        if c == 0:
            continue
        for r in range(m + 1):
            out[r] += c * comb(m, r) * a ** (m - r)
    return out


def _trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


# ---------------------------------------------------------------------------
# exact piecewise polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewisePoly:
    """Compactly supported piecewise polynomial with rational data.

    ``polys[i]`` (global basis, ascending powers of ``t``) is valid on
    ``(breaks[i], breaks[i+1])``; the function vanishes outside.
    """

    breaks: tuple[Fraction, ...]
    polys: tuple[tuple[Fraction, ...], ...]

    @classmethod
    def indicator(cls, a, b, value=1) -> "PiecewisePoly":
        a, b = _frac(a), _frac(b)
        if b < a:
            raise ValueError("empty interval")
        return cls((a, b), ((_frac(value),),))

    @classmethod
    def from_items(cls, items) -> "PiecewisePoly":
        """Sum of ``(lo, hi, poly)`` items, merged into disjoint pieces."""
        items = [(lo, hi, p) for lo, hi, p in items if hi > lo]
        if not items:
            return cls.zero()
        bps = sorted({v for lo, hi, _ in items for v in (lo, hi)})
        polys = []
        for l, r in zip(bps[:-1], bps[1:]):
            acc = [Fraction(0)]
            for lo, hi, p in items:
                if lo <= l and r <= hi:
                    acc = _padd(acc, p)
            polys.append(tuple(_trim(acc)))
        # drop zero pieces at the ends
        while polys and polys[-1] == (0,):
            polys.pop()
            bps.pop()
        while polys and polys[0] == (0,):
            polys.pop(0)
            bps.pop(0)
        if not polys:
            return cls.zero()
        return cls(tuple(bps), tuple(polys))

    @classmethod
    def zero(cls) -> "PiecewisePoly":
        return cls((), ())

    @property
    def is_zero(self) -> bool:
        return not self.polys

    @property
    def support(self) -> tuple[Fraction, Fraction] | None:
        return (self.breaks[0], self.breaks[-1]) if self.polys else None

    @property
    def degree(self) -> int:
        return max((len(p) - 1 for p in self.polys), default=0)

    def items(self):
        return [(l, r, p) for l, r, p in zip(self.breaks[:-1], self.breaks[1:], self.polys)]

    def shift(self, c) -> "PiecewisePoly":
        """``t -> self(t - c)``."""
        c = _frac(c)
        return PiecewisePoly(
            tuple(b + c for b in self.breaks),
            tuple(tuple(_trim(_taylor_shift(p, -c))) for p in self.polys),
        )

    def reflect(self) -> "PiecewisePoly":
        """``t -> self(-t)``."""
        polys = [tuple(c if m % 2 == 0 else -c for m, c in enumerate(p)) for p in self.polys]
        return PiecewisePoly(tuple(-b for b in reversed(self.breaks)), tuple(reversed(polys)))

    def __add__(self, other: "PiecewisePoly") -> "PiecewisePoly":
        return PiecewisePoly.from_items(self.items() + other.items())

    def scale(self, c) -> "PiecewisePoly":
        c = _frac(c)
        if c == 0:
            return PiecewisePoly.zero()
        return PiecewisePoly(self.breaks, tuple(tuple(_pscale(p, c)) for p in self.polys))

    def value(self, t, side: str = "right") -> Fraction:
        """Exact value; at a breakpoint the one-sided limit from ``side``."""
        t = _frac(t)
        for l, r, p in self.items():
            if l < t < r or (side == "right" and t == l) or (side == "left" and t == r):
                return _peval(p, t)
        return Fraction(0)

    def integral(self) -> Fraction:
        total = Fraction(0)
        for l, r, p in self.items():
            total += sum(c * (r ** (m + 1) - l ** (m + 1)) / (m + 1) for m, c in enumerate(p))
        return total


def _pair_conv(a, b, P, c, d, Q):
    """Items of ``int P(s) Q(t - s) ds`` for pieces ``P`` on [a,b] and ``Q`` on [c,d]."""
    # bivariate coefficients B[m][n] of s^m t^n
    B = {}
    for m, pm in enumerate(P):
        if pm == 0:
            continue
        for n, qn in enumerate(Q):
            if qn == 0:
                continue
            for r in range(n + 1):
                coef = pm * qn * comb(n, r) * (-1) ** r
                key = (m + r, n - r)
                B[key] = B.get(key, 0) + coef

    def F(alpha, beta):
        # antiderivative in s at s = alpha + beta t, as a polynomial in t
        out = [Fraction(0)]
        for (m, n), cf in B.items():
            pw = _ppow_linear(alpha, beta, m + 1)
            term = [Fraction(0)] * n + _pscale(pw, cf / (m + 1))
            out = _padd(out, term)
        return out

    pts = sorted({a + c, a + d, b + c, b + d})
    items = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi <= lo:
            continue
        mid = (lo + hi) / 2
        lower = (a, Fraction(0)) if a >= mid - d else (-d, Fraction(1))
        upper = (b, Fraction(0)) if b <= mid - c else (-c, Fraction(1))
        poly = _padd(F(*upper), _pscale(F(*lower), -1))
        items.append((lo, hi, tuple(_trim(poly))))
    return items


def conv_piecewise_poly(p: PiecewisePoly, q: PiecewisePoly) -> PiecewisePoly:
    """Exact convolution ``(p * q)(t) = int p(s) q(t - s) ds``."""
    if p.is_zero or q.is_zero:
        return PiecewisePoly.zero()
    items = []
    for a, b, P in p.items():
        for c, d, Q in q.items():
            items.extend(_pair_conv(a, b, P, c, d, Q))
    return PiecewisePoly.from_items(items)


def _chi(a) -> PiecewisePoly:
    """Indicator of ``[-a, a]``."""
    a = _frac(a)
    return PiecewisePoly.indicator(-a, a)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


class PiecewisePolyKernel:
    """``K(x, .)`` on ``[-x, x]`` as a weighted sum of exact shapes.

    Parameters
    ----------
    x : float
    terms : list of (complex, PiecewisePoly, tuple)
        Weight, exact shape and the index sequence producing it.

    The float representation stores each elementary piece in powers of
    ``t - t_left`` with complex coefficients.
    """

    def __init__(self, x: float, terms):
        self.x = float(x)
        self.terms = tuple(terms)
        bps = sorted({b for _, s, _ in self.terms for b in s.breaks} | {_frac(-self.x), _frac(self.x)})
        self._exact_breaks = tuple(bps)
        self.breakpoints = np.array([float(b) for b in bps])
        deg = max((s.degree for _, s, _ in self.terms), default=0)
        coeffs = np.zeros((max(len(bps) - 1, 0), deg + 1), dtype=complex)
        for i, (l, r) in enumerate(zip(bps[:-1], bps[1:])):
            mid = (l + r) / 2
            for w, s, _ in self.terms:
                for lo, hi, p in s.items():
                    if lo <= mid <= hi:
                        loc = _taylor_shift(list(p), l)
                        coeffs[i, : len(loc)] += w * np.array([float(c) for c in loc])
                        break
        self.coeffs = coeffs

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    def pieces(self):
        """``(lo, hi, poly)`` per elementary piece; ``poly`` evaluates at global ``t``."""
        out = []
        for i in range(len(self.breakpoints) - 1):
            lo, hi = self.breakpoints[i], self.breakpoints[i + 1]
            out.append((lo, hi, np.polynomial.Polynomial(self.coeffs[i], domain=[lo, lo + 1], window=[0, 1])))
        return out

    def __call__(self, t, side: str = "right"):
        """Kernel values; at breakpoints the one-sided limit from ``side``.

        ``t = x`` and ``t = -x`` are always taken from inside ``[-x, x]``.
        """
        t = np.asarray(t, dtype=float)
        bp = self.breakpoints
        if len(bp) < 2:
            return np.zeros(t.shape, dtype=complex)
        i = np.searchsorted(bp, t, side="right" if side == "right" else "left") - 1
        i = np.clip(i, 0, len(bp) - 2)
        inside = (t >= bp[0]) & (t <= bp[-1])
        u = t - bp[i]
        out = np.zeros(t.shape, dtype=complex)
        for m in range(self.coeffs.shape[1] - 1, -1, -1):
            out = out * u + self.coeffs[i, m]
        return np.where(inside, out, 0)

    def limit(self, t: float, side: str) -> complex:
        return complex(self(np.array(t), side=side))

    def exact_value(self, t, side: str = "right") -> complex:
        """``sum w * shape(t)`` with each shape evaluated in rational arithmetic."""
        return sum((w * float(s.value(t, side)) for w, s, _ in self.terms), 0j)

    def even_part(self, t):
        """``G(x, t) = K(x, t) + K(x, -t)``."""
        return self(t) + self(-np.asarray(t, dtype=float), side="left")

    def odd_part(self, t):
        """``S(x, t) = K(x, t) - K(x, -t)``."""
        return self(t) - self(-np.asarray(t, dtype=float), side="left")

    def exact_even_shapes(self):
        """Exact ``shape + reflected shape`` for every term."""
        return [s + s.reflect() for _, s, _ in self.terms]

    def exact_odd_shapes(self):
        return [s + s.reflect().scale(-1) for _, s, _ in self.terms]


def exact_kernel_q0(iset: InteractionSet, x: float) -> PiecewisePolyKernel:
    """Transmutation kernel of the ``q = 0``, ``h = 0`` problem at ``x``.

    ``K = sum (alpha_k / 2) H(x - x_k) chi[2 x_k - x, x]
    + sum_J alpha_J / 2^|J| H(x - x_jL) (chi_{d_1} * ... * chi_{d_{L-1}} * chi_{x - x_jL})(t - x_j1)``
    with ``d_l = x_{j_{l+1}} - x_{j_l}`` and ``chi_a`` the indicator of
    ``[-a, a]``.
    """
    if not x > 0:
        raise ValueError("kernel requires x > 0")
    X = _frac(x)
    pts = [_frac(p) for p in iset.points]
    al = iset.strengths
    terms = []
    for k, (p, a) in enumerate(zip(pts, al)):
        if X > p:
            terms.append((complex(a) / 2, PiecewisePoly.indicator(2 * p - X, X), (k,)))
    # convolution chains cached per prefix along the lexicographic enumeration
    chains: dict[tuple, PiecewisePoly] = {}

    def chain(seq):
        if seq not in chains:
            step = _chi(pts[seq[-1]] - pts[seq[-2]])
            chains[seq] = step if len(seq) == 2 else conv_piecewise_poly(chain(seq[:-1]), step)
        return chains[seq]

    for seq in IndexSequenceSet(iset):
        if not X > pts[seq[-1]]:
            continue
        shape = conv_piecewise_poly(chain(seq), _chi(X - pts[seq[-1]])).shift(pts[seq[0]])
        w = complex(np.prod([complex(al[j]) for j in seq])) / 2 ** len(seq)
        terms.append((w, shape, tuple(seq)))
    return PiecewisePolyKernel(x, terms)


@dataclass(frozen=True)
class TransmutedValue:
    """``u(x) + int_{-x}^{x} K(x, t) u(t) dt`` at one ``x``."""

    x: float
    value: complex
    integral: complex

    def __complex__(self):
        return complex(self.value)


def apply_transmutation(K: PiecewisePolyKernel, u, x: float | None = None, *,
                        nodes: int = 32, max_len: float = 0.25) -> TransmutedValue:
    """Apply the transmutation operator with kernel ``K`` to ``u``.

    Each polynomial piece is split into subintervals of length at most
    ``max_len`` and integrated by ``nodes``-point Gauss-Legendre, which is
    exact for polynomial ``u`` of degree up to ``2 nodes - 1 - deg K``.
    """
    x = K.x if x is None else float(x)
    tg, wg = np.polynomial.legendre.leggauss(nodes)
    total = 0j
    for lo, hi, poly in K.pieces():
        if hi <= lo:
            continue
        n = max(1, int(np.ceil((hi - lo) / max_len)))
        edges = np.linspace(lo, hi, n + 1)
        a, b = edges[:-1, None], edges[1:, None]
        tt = 0.5 * (b - a) * tg + 0.5 * (b + a)
        ww = 0.5 * (b - a) * wg
        total += np.sum(ww * poly(tt) * np.asarray(u(tt)))
    return TransmutedValue(x, complex(u(np.array(x))) + total, total)


@dataclass(frozen=True)
class GoursatReport:
    """Kernel values on the characteristics against the prescribed ones."""

    x: float
    diag_plus: complex
    diag_minus: complex
    expected_plus: complex
    expected_minus: complex

    @property
    def max_deviation(self) -> float:
        return max(abs(self.diag_plus - self.expected_plus), abs(self.diag_minus - self.expected_minus))


def goursat_check(K: PiecewisePolyKernel, q, iset: InteractionSet, h: complex = 0.0) -> GoursatReport:
    """Compare ``K(x, x-)`` with ``(h + int_0^x q + sigma(x))/2`` and ``K(x, -x+)`` with ``h/2``."""
    x = K.x
    if q is None or getattr(q, "is_zero", False):
        iq = 0.0
    else:
        tg, wg = np.polynomial.legendre.leggauss(64)
        iq = complex(np.sum(0.5 * x * wg * np.asarray(q(0.5 * x * (tg + 1)))))
    sig = complex(iset.sigma(x, side="left"))
    return GoursatReport(
        x,
        K.limit(x, "left"),
        K.limit(-x, "right"),
        0.5 * (h + iq + sig),
        0.5 * h,
    )


def kernel_samples(K: PiecewisePolyKernel, n: int = 401):
    """``(t, K(x, t))`` on ``n`` equispaced points of ``[-x, x]``."""
    t = np.linspace(-K.x, K.x, n)
    return t, K(t)
