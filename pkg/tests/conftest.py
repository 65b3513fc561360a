import random
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings, strategies as st

from hyperbolicity.certify import monomials_of_degree
from hyperbolicity.polyring import MultiPoly

settings.register_profile(
    "repo",
    deadline=None,
    max_examples=40,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def random_form(rng: random.Random, d: int, n: int, coeff=3, density=1.0) -> MultiPoly:
    """Form of degree ``d`` in x0..xn with ``F(1, 0, ..., 0) = 1``."""
    terms = {(d,) + (0,) * n: 1}
    for e in monomials_of_degree((1,) * (n + 1), d):
        if e[0] < d and rng.random() < density:
            terms[tuple(e)] = Fraction(rng.randint(-coeff, coeff), rng.choice((1, 1, 2)))
    return MultiPoly(n + 1, terms)


def random_xform(rng: random.Random, d: int, n: int, nvars: int, offset: int, coeff=3) -> MultiPoly:
    """Form of degree ``d`` in the ``n`` variables starting at ``offset``."""
    terms = {}
    for e in monomials_of_degree((1,) * n, d):
        full = [0] * nvars
        full[offset:offset + n] = e
        terms[tuple(full)] = rng.randint(-coeff, coeff)
    return MultiPoly(nvars, terms)


@st.composite
def forms(draw, max_d=4, max_n=2, min_d=1, min_n=1):
    d = draw(st.integers(min_d, max_d))
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 10**6))
    return random_form(random.Random(seed), d, n)


@pytest.fixture
def rng():
    return random.Random(20240611)
