"""Univariate views, Newton power sums, Hermite matrices and eliminants.

All routines are exact.  Matrices of polynomials are plain nested lists of
:class:`MultiPoly`; determinants use fraction-free elimination.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Sequence

from .polyring import MultiPoly, to_point


@dataclass(frozen=True)
class UniPolyView:
    """``sum(coeffs[j] * var**j)``; coefficients live in the ring without ``var``."""

    var_index: int
    coeffs: tuple[MultiPoly, ...]

    def __post_init__(self):
        if not self.coeffs or self.coeffs[-1].is_zero():
            raise ValueError("leading coefficient must be nonzero")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def ring_nvars(self) -> int:
        return self.coeffs[0].nvars

    @property
    def leading(self) -> MultiPoly:
        return self.coeffs[-1]

    def is_monic(self) -> bool:
        return self.leading == 1

    def derivative(self) -> "UniPolyView":
        if self.degree < 1:
            raise ValueError("derivative of a constant")
        return UniPolyView(self.var_index, tuple(c.scale(j) for j, c in enumerate(self.coeffs) if j))

    def reassemble(self) -> MultiPoly:
        i = self.var_index
        n = self.ring_nvars + 1
        out = MultiPoly.zero(n)
        for j, c in enumerate(self.coeffs):
            if c:
                mono = MultiPoly.monomial(tuple(j if k == i else 0 for k in range(n)))
                out = out + c.insert_var(i) * mono
        return out


def univariate_view(poly: MultiPoly, var: int) -> UniPolyView:
    if poly.is_zero():
        raise ValueError("the zero polynomial has no univariate view")
    deg = poly.degree_in(var)
    buckets: list[dict] = [dict() for _ in range(deg + 1)]
    for e, c in poly.items():
        buckets[e[var]][e[:var] + e[var + 1:]] = c
    return UniPolyView(var, tuple(MultiPoly(poly.nvars - 1, b) for b in buckets))


def univariate_from_coeffs(coeffs: Sequence, var_index: int = 0) -> UniPolyView:
    """View over a ring with no remaining variables; ``coeffs`` ascending."""
    return UniPolyView(var_index, tuple(MultiPoly.constant(0, c) for c in coeffs))


def newton_power_sums(view: UniPolyView, m: int) -> list[MultiPoly]:
    """Power sums ``N_0 .. N_m`` of the roots of a monic polynomial."""
    if not view.is_monic():
        raise ValueError("Newton identities need a monic polynomial")
    if m < 0:
        raise ValueError("m must be non-negative")
    d = view.degree
    nv = view.ring_nvars
    # a[k] is the coefficient of t^(d-k)
    a = [view.coeffs[d - k] for k in range(d + 1)]
    sums = [MultiPoly.constant(nv, d)]
    for k in range(1, m + 1):
        acc = MultiPoly.zero(nv)
        for i in range(1, min(k, d + 1)):
            if a[i]:
                acc = acc + a[i] * sums[k - i]
        if k <= d:
            acc = acc + a[k].scale(k)
        sums.append(-acc)
    return sums


@dataclass(frozen=True)
class SymMatrixPoly:
    """Symmetric matrix of polynomials stored as its upper triangle."""

    dim: int
    upper: tuple[tuple[MultiPoly, ...], ...]

    def entry(self, i: int, j: int) -> MultiPoly:
        if i > j:
            i, j = j, i
        return self.upper[i][j - i]

    def rows(self) -> list[list[MultiPoly]]:
        return [[self.entry(i, j) for j in range(self.dim)] for i in range(self.dim)]

    def at(self, point: Sequence) -> list[list[Fraction]]:
        """Exact rational matrix at a rational point."""
        point = to_point(point)
        return [[Fraction(self.entry(i, j).evaluate(point)) for j in range(self.dim)] for i in range(self.dim)]


def hermite_matrix(poly: MultiPoly, var: int = 0) -> SymMatrixPoly:
    """Hankel matrix of power sums of ``poly`` viewed as a polynomial in ``var``."""
    view = univariate_view(poly, var)
    d = view.degree
    if d < 1:
        raise ValueError("need positive degree in the distinguished variable")
    sums = newton_power_sums(view, 2 * d - 2)
    return SymMatrixPoly(d, tuple(tuple(sums[i + j] for j in range(i, d)) for i in range(d)))


def hermite_form(poly: MultiPoly, var: int = 0) -> MultiPoly:
    """``u^T H u`` in the ring (remaining variables..., u_1, ..., u_d)."""
    H = hermite_matrix(poly, var)
    d = H.dim
    n = poly.nvars - 1
    nv = n + d
    positions = list(range(n))
    u = [MultiPoly.var(nv, n + j) for j in range(d)]
    out = MultiPoly.zero(nv)
    for i in range(d):
        for j in range(i, d):
            entry = H.entry(i, j)
            if entry:
                factor = 1 if i == j else 2
                out = out + entry.embed(nv, positions).scale(factor) * u[i] * u[j]
    return out


# determinants


def _laplace(M: list[list[MultiPoly]], nv: int) -> MultiPoly:
    n = len(M)
    if n == 0:
        return MultiPoly.constant(nv, 1)
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    total = MultiPoly.zero(nv)
    for j in range(n):
        if M[0][j]:
            minor = [row[:j] + row[j + 1:] for row in M[1:]]
            term = M[0][j] * _laplace(minor, nv)
            total = total + term if j % 2 == 0 else total - term
    return total


def poly_det(M: Sequence[Sequence[MultiPoly]], nvars: int | None = None) -> MultiPoly:
    """Determinant over the polynomial ring.

    Expansion by minors for size <= 4, otherwise Bareiss elimination with
    exact divisions and row pivoting.
    """
    n = len(M)
    if any(len(row) != n for row in M):
        raise ValueError("matrix must be square")
    if nvars is None:
        nvars = M[0][0].nvars if n else 0
    A, factor = _pull_monomials([list(r) for r in M], nvars)
    if factor.is_zero():
        return factor
    # integer entries keep the elimination in fast int arithmetic
    scale = Fraction(1)
    for i, row in enumerate(A):
        den = 1
        for x in row:
            for _, c in x.items():
                if isinstance(c, Fraction):
                    den = lcm(den, c.denominator)
        if den != 1:
            A[i] = [x.scale(den) for x in row]
            scale /= den
    return (factor * _det_core(A, nvars)).scale(scale)


def _monomial_gcd(polys, nvars: int):
    g = None
    for p in polys:
        for e, _ in p.items():
            g = list(e) if g is None else [min(a, b) for a, b in zip(g, e)]
    return g


def _pull_monomials(A: list[list[MultiPoly]], nvars: int):
    """Divide each row, then each column, by the gcd monomial of its entries."""
    n = len(A)
    total = [0] * nvars
    for i in range(n):
        g = _monomial_gcd(A[i], nvars)
        if g is None:
            return A, MultiPoly.zero(nvars)
        if any(g):
            mono = MultiPoly.monomial(g)
            A[i] = [x.exact_div(mono) for x in A[i]]
            total = [a + b for a, b in zip(total, g)]
    for j in range(n):
        g = _monomial_gcd([A[i][j] for i in range(n)], nvars)
        if g is None:
            return A, MultiPoly.zero(nvars)
        if any(g):
            mono = MultiPoly.monomial(g)
            for i in range(n):
                A[i][j] = A[i][j].exact_div(mono)
            total = [a + b for a, b in zip(total, g)]
    return A, MultiPoly.monomial(total)


def _det_core(A: list[list[MultiPoly]], nvars: int) -> MultiPoly:
    n = len(A)
    if n <= 4:
        return _laplace(A, nvars)
    sign = 1
    prev = MultiPoly.constant(nvars, 1)
    for k in range(n - 1):
        if A[k][k].is_zero():
            # prefer the sparsest nonzero pivot below
            cands = [i for i in range(k + 1, n) if A[i][k]]
            if not cands:
                return MultiPoly.zero(nvars)
            i = min(cands, key=lambda r: len(A[r][k]))
            A[k], A[i] = A[i], A[k]
            sign = -sign
        pivot = A[k][k]
        for i in range(k + 1, n):
            aik = A[i][k]
            for j in range(k + 1, n):
                val = pivot * A[i][j]
                if aik and A[k][j]:
                    val = val - aik * A[k][j]
                A[i][j] = val.exact_div(prev) if k else val
            A[i][k] = MultiPoly.zero(nvars)
        prev = pivot
    det = A[n - 1][n - 1]
    return det if sign > 0 else -det


def sylvester_matrix(g: UniPolyView, h: UniPolyView) -> list[list[MultiPoly]]:
    """Columns: ``deg h`` shifted copies of g's coefficients (highest first),
    then ``deg g`` shifted copies of h's."""
    m, n = g.degree, h.degree
    size = m + n
    nv = g.ring_nvars
    zero = MultiPoly.zero(nv)
    gd = g.coeffs[::-1]
    hd = h.coeffs[::-1]
    M = [[zero] * size for _ in range(size)]
    for c in range(n):
        for k, coef in enumerate(gd):
            M[c + k][c] = coef
    for c in range(m):
        for k, coef in enumerate(hd):
            M[c + k][n + c] = coef
    return M


def sylvester_resultant(g: UniPolyView, h: UniPolyView) -> MultiPoly:
    if g.var_index != h.var_index:
        raise ValueError("views must share the distinguished variable")
    if g.ring_nvars != h.ring_nvars:
        raise ValueError("views live in different rings")
    if g.degree < 1 and h.degree < 1:
        raise ValueError("resultant of two constants is undefined")
    return poly_det(sylvester_matrix(g, h), g.ring_nvars)


def discriminant(view: UniPolyView) -> MultiPoly:
    """``(-1)^(d(d-1)/2) * Res(f, f')`` for monic ``f`` of degree >= 2."""
    if not view.is_monic():
        raise ValueError("discriminant is defined here for monic polynomials")
    d = view.degree
    if d < 2:
        raise ValueError("discriminant needs degree >= 2")
    res = sylvester_resultant(view, view.derivative())
    return res if (d * (d - 1) // 2) % 2 == 0 else -res


# exact inertia


def rational_inertia(A: Sequence[Sequence]) -> tuple[int, int, int]:
    """(#positive, #negative, #zero) eigenvalue signs by exact congruence."""
    M = [[Fraction(x) for x in row] for row in A]
    n = len(M)
    for i in range(n):
        for j in range(i + 1, n):
            if M[i][j] != M[j][i]:
                raise ValueError("matrix is not symmetric")
    pos = neg = 0
    active = list(range(n))
    while active:
        piv = next((i for i in active if M[i][i] != 0), None)
        if piv is None:
            pair = next(((i, j) for i in active for j in active if i < j and M[i][j] != 0), None)
            if pair is None:
                break
            i, j = pair
            # congruence row_i += row_j, col_i += col_j gives M_ii = 2 M_ij != 0
            for k in range(n):
                M[i][k] += M[j][k]
            for k in range(n):
                M[k][i] += M[k][j]
            piv = i
        p = M[piv][piv]
        if p > 0:
            pos += 1
        else:
            neg += 1
        active.remove(piv)
        for i in active:
            f = M[i][piv] / p
            if f:
                for j in active:
                    M[i][j] -= f * M[piv][j]
        for i in active:
            M[i][piv] = M[piv][i] = Fraction(0)
    return pos, neg, n - pos - neg


def rank_signature(H: SymMatrixPoly | Sequence[Sequence], a: Sequence = ()) -> tuple[int, int]:
    """Exact (rank, signature) of ``H`` at the rational point ``a``."""
    A = H.at(a) if isinstance(H, SymMatrixPoly) else H
    pos, neg, _ = rational_inertia(A)
    return pos + neg, pos - neg
