"""Built-in test forms with known ground truth."""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .polyring import MultiPoly, parse_poly

HYPERBOLIC = "hyperbolic"
NOT_HYPERBOLIC = "not_hyperbolic"
NOT_REFUTED = "not_refuted"  # hyperbolic but possibly uncertifiable: Unknown is fine

EXAMPLE_CUBIC = "x0^3 - 1/2*x0^2*x1 - x0*x1^2 - 1/2*x0*x2^2 + 1/2*x1^3"


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    poly: MultiPoly
    names: tuple[str, ...]
    expect: str


def var_names(n: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(n + 1))


def weierstrass_cubic(c) -> MultiPoly:
    """``x0*x2^2 - (x1 - x0/c)*(x1^2 - c*x0^2)``; hyperbolic at (1,0,0) iff ``c > 0``."""
    c = Fraction(c)
    if c == 0:
        raise ValueError("c must be nonzero")
    x0, x1, x2 = (MultiPoly.var(3, i) for i in range(3))
    return x0 * x2 * x2 - (x1 - x0.scale(1 / c)) * (x1 * x1 - (x0 * x0).scale(c))


def lorentz_cone(n: int) -> MultiPoly:
    """``x0^2 - x1^2 - ... - xn^2``."""
    xs = [MultiPoly.var(n + 1, i) for i in range(n + 1)]
    out = xs[0] * xs[0]
    for x in xs[1:]:
        out = out - x * x
    return out


def fermat_quartic() -> MultiPoly:
    return parse_poly("x0^4 - x1^4 - x2^4", var_names(2))


def example_cubic() -> MultiPoly:
    return parse_poly(EXAMPLE_CUBIC, var_names(2))


def linear_product(rng: random.Random, d: int, n: int) -> MultiPoly:
    """Product of ``d`` forms ``x0 + a.x`` with small rational ``a``; hyperbolic at (1,0,...,0)."""
    xs = [MultiPoly.var(n + 1, i) for i in range(n + 1)]
    out = MultiPoly.constant(n + 1, 1)
    for _ in range(d):
        ell = xs[0]
        for x in xs[1:]:
            ell = ell + x.scale(Fraction(rng.randint(-6, 6), rng.randint(1, 4)))
        out = out * ell
    return out


def random_linear_products(count: int = 20, seed: int = 2024, max_d: int = 4, max_n: int = 3) -> list[CorpusEntry]:
    rng = random.Random(seed)
    out = []
    for k in range(count):
        d = rng.randint(1, max_d)
        n = rng.randint(1, max_n)
        out.append(CorpusEntry(f"linprod-{k}-d{d}-n{n}", linear_product(rng, d, n), var_names(n), NOT_REFUTED))
    return out


def builtin_corpus(include_random: bool = True) -> list[CorpusEntry]:
    v2 = var_names(2)
    out = [
        CorpusEntry("weierstrass-c=2", weierstrass_cubic(2), v2, HYPERBOLIC),
        CorpusEntry("weierstrass-c=1/2", weierstrass_cubic(Fraction(1, 2)), v2, HYPERBOLIC),
        CorpusEntry("weierstrass-c=1", weierstrass_cubic(1), v2, NOT_REFUTED),
        CorpusEntry("weierstrass-c=-1", weierstrass_cubic(-1), v2, NOT_HYPERBOLIC),
        CorpusEntry("example-cubic", example_cubic(), v2, HYPERBOLIC),
        CorpusEntry("fermat-quartic", fermat_quartic(), v2, NOT_HYPERBOLIC),
    ]
    for n in range(1, 5):
        out.append(CorpusEntry(f"lorentz-n={n}", lorentz_cone(n), var_names(n), HYPERBOLIC))
    if include_random:
        out.extend(random_linear_products())
    return out


def consistent(expect: str, status: str) -> bool:
    """Whether an observed verdict is compatible with the ground truth."""
    if expect == HYPERBOLIC:
        return status in (HYPERBOLIC, "unknown")
    if expect == NOT_HYPERBOLIC:
        return status in (NOT_HYPERBOLIC, "unknown")
    return status != NOT_HYPERBOLIC
