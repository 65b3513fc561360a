"""Sparse multivariate polynomials with exact rational coefficients.

A :class:`MultiPoly` is an immutable map from exponent tuples to nonzero
rationals.  Coefficients are stored as ``int`` when integral and as
:class:`fractions.Fraction` otherwise, which keeps integer-heavy eliminations
fast without giving up exactness.
"""

from __future__ import annotations

import heapq
import re
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Iterator, Mapping, Sequence, Union

Coeff = Union[int, Fraction]
Exponent = tuple[int, ...]
Point = tuple[Fraction, ...]


class NotDivisibleError(ArithmeticError):
    """Raised by :meth:`MultiPoly.exact_div` when the remainder is nonzero."""


class PolySyntaxError(ValueError):
    """Parse failure; ``position`` is the 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


def _norm(c) -> Coeff:
    if isinstance(c, int):
        return c
    if isinstance(c, Fraction):
        return c.numerator if c.denominator == 1 else c
    if isinstance(c, Rational):
        return _norm(Fraction(c.numerator, c.denominator))
    if isinstance(c, str):
        return _norm(Fraction(c))
    raise TypeError(f"coefficient must be rational, got {type(c).__name__}")


def to_rational(value) -> Coeff:
    """Convert ints, Fractions and ``"p/q"`` strings to a normalized rational."""
    if isinstance(value, str):
        value = value.strip()
        if "/" in value:
            num, den = value.split("/", 1)
            if int(den) == 0:
                raise ZeroDivisionError(f"zero denominator in {value!r}")
            return _norm(Fraction(int(num), int(den)))
        return _norm(Fraction(value))
    if isinstance(value, float):
        raise TypeError("floats are not accepted in the exact layer")
    return _norm(value)


def to_point(coords: Iterable) -> Point:
    return tuple(Fraction(to_rational(c)) for c in coords)


def grlex_key(exp: Exponent) -> tuple[int, Exponent]:
    return (sum(exp), exp)


class MultiPoly:
    """Immutable sparse polynomial in ``nvars`` variables over Q."""

    __slots__ = ("nvars", "_terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Exponent, object] | None = None):
        if nvars < 0:
            raise ValueError("nvars must be non-negative")
        self.nvars = nvars
        clean: dict[Exponent, Coeff] = {}
        if terms:
            for exp, c in terms.items():
                exp = tuple(exp)
                if len(exp) != nvars:
                    raise ValueError(f"exponent {exp} has length != {nvars}")
                if any(e < 0 for e in exp):
                    raise ValueError(f"negative exponent in {exp}")
                c = _norm(c)
                if c:
                    clean[exp] = c
        self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, nvars: int, terms: dict[Exponent, Coeff]) -> "MultiPoly":
        # trusted constructor: caller guarantees normalized, nonzero coefficients
        obj = cls.__new__(cls)
        obj.nvars = nvars
        obj._terms = terms
        obj._hash = None
        return obj

    # constructors

    @classmethod
    def zero(cls, nvars: int) -> "MultiPoly":
        return cls._raw(nvars, {})

    @classmethod
    def constant(cls, nvars: int, c) -> "MultiPoly":
        c = _norm(c)
        return cls._raw(nvars, {(0,) * nvars: c} if c else {})

    @classmethod
    def var(cls, nvars: int, i: int) -> "MultiPoly":
        exp = [0] * nvars
        exp[i] = 1
        return cls._raw(nvars, {tuple(exp): 1})

    @classmethod
    def monomial(cls, exp: Sequence[int], c=1) -> "MultiPoly":
        return cls(len(exp), {tuple(exp): c})

    # basic protocol

    @property
    def terms(self) -> dict[Exponent, Coeff]:
        """A copy of the term map."""
        return dict(self._terms)

    def items(self) -> Iterator[tuple[Exponent, Coeff]]:
        return iter(self._terms.items())

    def sorted_terms(self) -> list[tuple[Exponent, Coeff]]:
        """Terms in descending graded-lex order."""
        return sorted(self._terms.items(), key=lambda kv: grlex_key(kv[0]), reverse=True)

    def coeff(self, exp: Sequence[int]) -> Coeff:
        return self._terms.get(tuple(exp), 0)

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return not self._terms or (len(self._terms) == 1 and (0,) * self.nvars in self._terms)

    def constant_value(self) -> Coeff:
        if not self.is_constant():
            raise ValueError("polynomial is not constant")
        return self._terms.get((0,) * self.nvars, 0)

    def __eq__(self, other) -> bool:
        if isinstance(other, MultiPoly):
            return self.nvars == other.nvars and self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self.is_constant() and self.constant_value() == other
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self._terms.items())))
        return self._hash

    def __repr__(self) -> str:
        return f"MultiPoly({self.nvars}, {format_poly(self)!r})"

    # arithmetic

    def _coerce(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            if other.nvars != self.nvars:
                raise ValueError(f"ring mismatch: {self.nvars} vs {other.nvars} variables")
            return other
        return MultiPoly.constant(self.nvars, other)

    def __add__(self, other) -> "MultiPoly":
        other = self._coerce(other)
        if len(other._terms) > len(self._terms):
            a, b = other._terms, self._terms
        else:
            a, b = self._terms, other._terms
        out = dict(a)
        for exp, c in b.items():
            v = out.get(exp, 0) + c
            if v:
                out[exp] = _norm(v) if isinstance(v, Fraction) else v
            else:
                out.pop(exp, None)
        return MultiPoly._raw(self.nvars, out)

    __radd__ = __add__

    def __neg__(self) -> "MultiPoly":
        return MultiPoly._raw(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other) -> "MultiPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "MultiPoly":
        return self._coerce(other) - self

    def scale(self, c) -> "MultiPoly":
        c = _norm(c)
        if not c:
            return MultiPoly.zero(self.nvars)
        if c == 1:
            return self
        return MultiPoly._raw(self.nvars, {e: _norm(v * c) for e, v in self._terms.items()})

    def __mul__(self, other) -> "MultiPoly":
        if not isinstance(other, MultiPoly):
            return self.scale(other)
        other = self._coerce(other)
        if not self._terms or not other._terms:
            return MultiPoly.zero(self.nvars)
        a, b = self._terms, other._terms
        if len(a) < len(b):
            a, b = b, a
        out: dict[Exponent, Coeff] = {}
        get = out.get
        for eb, cb in b.items():
            for ea, ca in a.items():
                e = tuple(x + y for x, y in zip(ea, eb))
                out[e] = get(e, 0) + ca * cb
        return MultiPoly._raw(
            self.nvars, {e: _norm(c) for e, c in out.items() if c}
        )

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "MultiPoly":
        if not isinstance(k, int) or k < 0:
            raise ValueError("exponent must be a non-negative integer")
        result = MultiPoly.constant(self.nvars, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def exact_div(self, divisor: "MultiPoly") -> "MultiPoly":
        """Quotient of an exact division; raises :class:`NotDivisibleError` otherwise."""
        divisor = self._coerce(divisor)
        if divisor.is_zero():
            raise ZeroDivisionError("division by the zero polynomial")
        if divisor.is_constant():
            return self.scale(Fraction(1) / Fraction(divisor.constant_value()))
        lead_e, lead_c = max(divisor._terms.items(), key=lambda kv: grlex_key(kv[0]))
        rest = [(e, c) for e, c in divisor._terms.items() if e != lead_e]
        rem = dict(self._terms)
        heap = [(-sum(e), tuple(-x for x in e)) for e in rem]
        heapq.heapify(heap)
        quot: dict[Exponent, Coeff] = {}
        while heap:
            _, neg = heapq.heappop(heap)
            e = tuple(-x for x in neg)
            c = rem.pop(e, 0)
            if not c:
                continue
            qe = tuple(x - y for x, y in zip(e, lead_e))
            if any(x < 0 for x in qe):
                raise NotDivisibleError("nonzero remainder in exact division")
            if isinstance(c, int) and isinstance(lead_c, int) and c % lead_c == 0:
                qc = c // lead_c
            else:
                qc = _norm(Fraction(c) / lead_c)
            quot[qe] = qc
            for de, dc in rest:
                te = tuple(x + y for x, y in zip(qe, de))
                v = rem.get(te, 0) - qc * dc
                if v:
                    if te not in rem:
                        heapq.heappush(heap, (-sum(te), tuple(-x for x in te)))
                    rem[te] = _norm(v)
                else:
                    rem.pop(te, None)
        return MultiPoly._raw(self.nvars, quot)

    def diff(self, i: int) -> "MultiPoly":
        """Partial derivative with respect to variable ``i``."""
        out: dict[Exponent, Coeff] = {}
        for e, c in self._terms.items():
            k = e[i]
            if k:
                ne = e[:i] + (k - 1,) + e[i + 1:]
                out[ne] = _norm(c * k)
        return MultiPoly._raw(self.nvars, out)

    # degrees

    def total_degree(self) -> int:
        if not self._terms:
            return -1
        return max(sum(e) for e in self._terms)

    def degree_in(self, i: int) -> int:
        if not self._terms:
            return -1
        return max(e[i] for e in self._terms)

    def lowest_degree_in(self, i: int) -> int:
        if not self._terms:
            return -1
        return min(e[i] for e in self._terms)

    def homogeneity(self) -> int | None:
        """Degree if every term has the same total degree, else ``None``."""
        if not self._terms:
            raise ValueError("the zero polynomial has no degree")
        degs = {sum(e) for e in self._terms}
        return degs.pop() if len(degs) == 1 else None

    def is_homogeneous(self) -> bool:
        return self.homogeneity() is not None

    def variables(self) -> set[int]:
        return {i for e in self._terms for i, k in enumerate(e) if k}

    # evaluation and substitution

    def __call__(self, *point):
        return self.evaluate(point[0] if len(point) == 1 and isinstance(point[0], (list, tuple)) else point)

    def evaluate(self, point: Sequence):
        if len(point) != self.nvars:
            raise ValueError(f"point has length {len(point)}, expected {self.nvars}")
        exact = all(isinstance(p, (int, Fraction)) for p in point)
        if exact:
            point = [Fraction(p) for p in point]
            total = Fraction(0)
        else:
            point = [complex(p) if isinstance(p, complex) else float(p) for p in point]
            total = 0.0
        for e, c in self._terms.items():
            v = c if exact else float(c)
            for p, k in zip(point, e):
                if k:
                    v = v * p**k
            total += v
        return _norm(total) if exact else total

    def subs(self, mapping: Mapping[int, object]) -> "MultiPoly":
        """Substitute rational constants for some variables (ring unchanged)."""
        vals = {i: Fraction(to_rational(v)) for i, v in mapping.items()}
        out: dict[Exponent, Coeff] = {}
        for e, c in self._terms.items():
            v = Fraction(c)
            ne = list(e)
            for i, val in vals.items():
                if e[i]:
                    v *= val ** e[i]
                    ne[i] = 0
            if v:
                ne = tuple(ne)
                out[ne] = out.get(ne, 0) + v
        return MultiPoly(self.nvars, out)

    def compose(self, images: Sequence["MultiPoly"]) -> "MultiPoly":
        """Substitute ``images[i]`` for variable ``i``; result lives in their ring."""
        if len(images) != self.nvars:
            raise ValueError("need one image per variable")
        if not images:
            return self
        target = images[0].nvars
        if any(p.nvars != target for p in images):
            raise ValueError("images must share a ring")
        cache: dict[tuple[int, int], MultiPoly] = {}

        def power(i: int, k: int) -> MultiPoly:
            key = (i, k)
            if key not in cache:
                cache[key] = images[i] if k == 1 else power(i, k - 1) * images[i]
            return cache[key]

        acc: dict[Exponent, Coeff] = {}
        for e, c in self._terms.items():
            term = MultiPoly.constant(target, c)
            for i, k in enumerate(e):
                if k:
                    term = term * power(i, k)
            for te, tc in term._terms.items():
                acc[te] = acc.get(te, 0) + tc
        return MultiPoly(target, acc)

    # ring changes

    def embed(self, nvars: int, positions: Sequence[int]) -> "MultiPoly":
        """Move variable ``i`` to position ``positions[i]`` of a ring with ``nvars`` variables."""
        if len(positions) != self.nvars:
            raise ValueError("need one position per variable")
        out: dict[Exponent, Coeff] = {}
        for e, c in self._terms.items():
            ne = [0] * nvars
            for p, k in zip(positions, e):
                ne[p] += k
            out[tuple(ne)] = c
        return MultiPoly._raw(nvars, out)

    def drop_var(self, i: int) -> "MultiPoly":
        """Remove variable ``i``, which must not occur."""
        out: dict[Exponent, Coeff] = {}
        for e, c in self._terms.items():
            if e[i]:
                raise ValueError(f"variable {i} occurs in the polynomial")
            out[e[:i] + e[i + 1:]] = c
        return MultiPoly._raw(self.nvars - 1, out)

    def insert_var(self, i: int) -> "MultiPoly":
        """Add a new variable at index ``i`` (not occurring)."""
        return MultiPoly._raw(
            self.nvars + 1, {e[:i] + (0,) + e[i:]: c for e, c in self._terms.items()}
        )

    def map_coeffs(self, fn) -> "MultiPoly":
        return MultiPoly(self.nvars, {e: fn(c) for e, c in self._terms.items()})

    def is_even_in(self, i: int) -> bool:
        return all(e[i] % 2 == 0 for e in self._terms)

    def is_odd_in(self, i: int) -> bool:
        return all(e[i] % 2 == 1 for e in self._terms)

    def flip_sign_of(self, i: int) -> "MultiPoly":
        """The polynomial with variable ``i`` replaced by its negative."""
        return MultiPoly._raw(
            self.nvars, {e: (-c if e[i] % 2 else c) for e, c in self._terms.items()}
        )

    def content_scale(self) -> Fraction:
        """Positive rational ``r`` such that ``r * self`` has coprime integer coefficients."""
        from math import gcd, lcm

        if not self._terms:
            return Fraction(1)
        den = 1
        for c in self._terms.values():
            if isinstance(c, Fraction):
                den = lcm(den, c.denominator)
        g = 0
        for c in self._terms.values():
            g = gcd(g, int(c * den))
        return Fraction(den, g)


def ring_arith(op: str, *args):
    """Dispatch helper mirroring the named ring operations."""
    if op == "add":
        return args[0] + args[1]
    if op == "sub":
        return args[0] - args[1]
    if op == "mul":
        return args[0] * args[1]
    if op == "exact_div":
        return args[0].exact_div(args[1])
    if op == "pow":
        return args[0] ** args[1]
    if op == "partial_derivative":
        return args[0].diff(args[1])
    raise ValueError(f"unknown ring operation {op!r}")


# text I/O

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(.))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        if m.group(1) is not None:
            tokens.append(("num", m.group(1), m.start(1)))
        elif m.group(2) is not None:
            tokens.append(("id", m.group(2), m.start(2)))
        elif m.group(3) is not None:
            ch = m.group(3)
            if ch not in "+-*/^()":
                raise PolySyntaxError(f"unexpected character {ch!r}", m.start(3), text)
            tokens.append((ch, ch, m.start(3)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.index = {name: i for i, name in enumerate(names)}
        self.nvars = len(names)
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            want = "a number" if kind == "num" else repr(kind)
            got = "end of input" if tok[0] == "end" else repr(tok[1])
            raise PolySyntaxError(f"expected {want}, got {got}", tok[2], self.text)
        self.pos += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return PolySyntaxError(msg, tok[2], self.text)

    def parse(self) -> MultiPoly:
        if self.peek()[0] == "end":
            raise self.error("empty polynomial")
        result = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            if tok[0] in ("num", "id", "("):
                raise self.error("implicit multiplication is not allowed")
            raise self.error(f"unexpected {tok[1]!r}")
        return result

    def expr(self) -> MultiPoly:
        acc = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            rhs = self.term()
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def term(self) -> MultiPoly:
        acc = self.factor()
        while self.peek()[0] == "*":
            self.take()
            acc = acc * self.factor()
        tok = self.peek()
        if tok[0] in ("num", "id", "("):
            raise self.error("implicit multiplication is not allowed")
        return acc

    def factor(self) -> MultiPoly:
        kind = self.peek()[0]
        if kind == "-":
            self.take()
            return -self.factor()
        if kind == "+":
            self.take()
            return self.factor()
        return self.power()

    def power(self) -> MultiPoly:
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            k = int(self.take("num")[1])
            base = base**k
            if self.peek()[0] == "^":
                raise self.error("chained exponents need parentheses")
        return base

    def atom(self) -> MultiPoly:
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            value = Fraction(int(tok[1]))
            if self.peek()[0] == "/":
                self.take()
                den_tok = self.take("num")
                den = int(den_tok[1])
                if den == 0:
                    raise PolySyntaxError("zero denominator", den_tok[2], self.text)
                value /= den
            return MultiPoly.constant(self.nvars, value)
        if tok[0] == "id":
            self.take()
            if tok[1] not in self.index:
                raise PolySyntaxError(f"unknown variable {tok[1]!r}", tok[2], self.text)
            return MultiPoly.var(self.nvars, self.index[tok[1]])
        if tok[0] == "(":
            self.take()
            inner = self.expr()
            self.take(")")
            return inner
        if tok[0] == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {tok[1]!r}")


def parse_poly(text: str, names: Sequence[str]) -> MultiPoly:
    """Parse ``text`` over the ordered variable list ``names``."""
    if len(set(names)) != len(names):
        raise ValueError("duplicate variable names")
    return _Parser(text, names).parse()


def format_rational(c: Coeff) -> str:
    c = _norm(c)
    if isinstance(c, int):
        return str(c)
    return f"{c.numerator}/{c.denominator}"


def format_poly(poly: MultiPoly, names: Sequence[str] | None = None) -> str:
    """Render in descending graded-lex order; inverse of :func:`parse_poly`."""
    if names is None:
        names = [f"x{i}" for i in range(poly.nvars)]
    if poly.is_zero():
        return "0"
    parts: list[str] = []
    for exp, c in poly.sorted_terms():
        factors = [name if k == 1 else f"{name}^{k}" for name, k in zip(names, exp) if k]
        mag = abs(c)
        if not factors:
            body = format_rational(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = format_rational(mag) + "*" + "*".join(factors)
        if not parts:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append(("- " if c < 0 else "+ ") + body)
    return " ".join(parts)


def poly_ring(names: Sequence[str]) -> tuple[MultiPoly, ...]:
    """Generators of the ring on ``names``, handy for building polynomials in code."""
    return tuple(MultiPoly.var(len(names), i) for i in range(len(names)))


# coordinate change


def completion_matrix(e: Sequence) -> list[list[Fraction]]:
    """Invertible matrix with first column ``e``; other columns are unit vectors.

    The pivot is the first nonzero coordinate of ``e``; the unit vectors of the
    remaining coordinates follow in increasing order.
    """
    e = to_point(e)
    n = len(e)
    pivot = next((i for i, v in enumerate(e) if v != 0), None)
    if pivot is None:
        raise ValueError("the direction e must be nonzero")
    cols = [list(e)]
    for j in range(n):
        if j != pivot:
            cols.append([Fraction(int(i == j)) for i in range(n)])
    return [[cols[c][r] for c in range(n)] for r in range(n)]


def normalize_at_point(poly: MultiPoly, e: Sequence) -> MultiPoly:
    """Return ``G(y) = F(M y) / F(e)`` so that hyperbolicity at ``e`` becomes
    hyperbolicity at ``(1, 0, ..., 0)`` and ``G(1, 0, ..., 0) = 1``."""
    if poly.is_zero():
        raise ValueError("the zero polynomial is not admissible")
    if poly.homogeneity() is None:
        raise ValueError("polynomial is not homogeneous")
    e = to_point(e)
    if len(e) != poly.nvars:
        raise ValueError(f"point has length {len(e)}, expected {poly.nvars}")
    value = poly.evaluate(e)
    if value == 0:
        raise ValueError("F(e) = 0: the point is not admissible")
    M = completion_matrix(e)
    n = poly.nvars
    images = [
        MultiPoly(n, {tuple(int(j == k) for j in range(n)): M[i][k] for k in range(n)})
        for i in range(n)
    ]
    return poly.compose(images).scale(Fraction(1) / Fraction(value))
