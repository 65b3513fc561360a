"""Randomized falsification with exact confirmation.

Directions ``a`` are drawn from per-sample seeded streams, the roots of
``f_a(t) = F(t, a)`` come from companion-matrix eigenvalues, and every
candidate is re-checked exactly: the Hermite matrix of ``f_{a_rat}`` at a
rational rounding of ``a`` must have rank greater than its signature.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .polyring import MultiPoly, format_rational
from .structmats import hermite_matrix, rank_signature, univariate_from_coeffs, univariate_view

IM_TOL = 1e-7
DENOMINATOR_CAP = 10**4
BATCH = 256


@dataclass(frozen=True)
class Witness:
    direction: tuple[float, ...]
    direction_rational: tuple[Fraction, ...]
    root: complex
    im_margin: float
    exact_confirmation: bool
    sample_index: int = -1

    def to_json(self) -> dict:
        return {
            "direction": [float(x) for x in self.direction],
            "direction_rational": [format_rational(x) for x in self.direction_rational],
            "root": {"re": self.root.real, "im": self.root.imag},
            "confirmed": self.exact_confirmation,
        }


def roots_univariate(coeffs: Sequence[float]) -> tuple[np.ndarray, float]:
    """Roots of the monic polynomial ``sum(coeffs[j] t^j)`` and the backward error.

    The backward error is the largest coefficient gap between the input and
    the polynomial recomposed from the computed roots, relative to ``1 + max|c|``.
    """
    c = np.asarray(coeffs, dtype=float)
    d = len(c) - 1
    if d < 1:
        raise ValueError("need degree >= 1")
    if c[-1] != 1.0:
        raise ValueError("polynomial must be monic")
    comp = np.zeros((d, d))
    comp[0, :] = -c[-2::-1]
    comp[np.arange(1, d), np.arange(d - 1)] = 1.0
    roots = np.linalg.eigvals(comp)
    recomposed = np.real_if_close(np.poly(roots))[::-1]
    err = float(np.max(np.abs(recomposed - c)) / (1.0 + np.max(np.abs(c))))
    return roots, err


class _CoeffEvaluator:
    """Vectorized evaluation of the t-coefficients of ``F(t, a)`` over many ``a``."""

    def __init__(self, poly: MultiPoly):
        view = univariate_view(poly, 0)
        self.degree = view.degree
        self.parts = []
        for c in view.coeffs:
            if c.is_zero():
                self.parts.append(None)
                continue
            exps = np.array([e for e, _ in c.items()], dtype=float).reshape(len(c), c.nvars)
            vals = np.array([float(v) for _, v in c.items()])
            self.parts.append((exps, vals))

    def __call__(self, A: np.ndarray) -> np.ndarray:
        out = np.zeros((A.shape[0], self.degree + 1))
        for j, part in enumerate(self.parts):
            if part is None:
                continue
            exps, vals = part
            if exps.shape[1] == 0:
                out[:, j] = vals.sum()
                continue
            mon = np.prod(A[:, None, :] ** exps[None, :, :], axis=2)
            out[:, j] = mon @ vals
        return out


def direction_for(seed: int, index: int, n: int) -> np.ndarray:
    rng = np.random.default_rng([seed, index])
    a = rng.standard_normal(n)
    norm = np.linalg.norm(a)
    return a / norm if norm > 0 else a


def _round_direction(a: Sequence[float]) -> tuple[Fraction, ...]:
    return tuple(Fraction(float(x)).limit_denominator(DENOMINATOR_CAP) for x in a)


def confirm(poly: MultiPoly, a_rat: Sequence[Fraction]) -> bool:
    """Exact check that ``F(t, a_rat)`` has a non-real root."""
    coeffs = [Fraction(c.evaluate(list(a_rat))) for c in univariate_view(poly, 0).coeffs]
    H = hermite_matrix_const(coeffs)
    rank, sig = rank_signature(H)
    return rank > sig


def hermite_matrix_const(coeffs: Sequence[Fraction]):
    """Rational Hermite matrix of a monic univariate (ascending coefficients)."""
    view = univariate_from_coeffs(coeffs)
    H = hermite_matrix(view.reassemble(), 0)
    return H.at(())


def _nonreal(roots: np.ndarray) -> np.ndarray:
    return np.abs(roots.imag) > IM_TOL * (1.0 + np.abs(roots))


def check_direction(poly: MultiPoly, a: Sequence[float], index: int = -1) -> Witness | None:
    """Float screen plus exact confirmation for one direction."""
    a_rat = _round_direction(a)
    if not any(a_rat):
        return None
    coeffs = [float(c.evaluate(list(a_rat))) for c in univariate_view(poly, 0).coeffs]
    roots, _ = roots_univariate(coeffs)
    mask = _nonreal(roots)
    if not mask.any():
        return None
    if not confirm(poly, a_rat):
        return None
    margins = np.abs(roots.imag) / (1.0 + np.abs(roots))
    k = int(np.argmax(np.where(mask, margins, -1.0)))
    root = complex(roots[k])
    if root.imag < 0:
        root = root.conjugate()
    return Witness(
        direction=tuple(float(x) for x in a_rat),
        direction_rational=a_rat,
        root=root,
        im_margin=float(margins[k]),
        exact_confirmation=True,
        sample_index=index,
    )


def find_witness(
    poly: MultiPoly,
    budget: int = 2000,
    seed: int = 42,
    extra_directions: list | None = None,
    stop=None,
) -> Witness | None:
    """First confirmed witness in sample-index order, or ``None``.

    ``poly`` must be normalized at (1, 0, ..., 0).  ``extra_directions`` are
    checked before the random ones (index -1).
    """
    n = poly.nvars - 1
    if n == 0 or poly.homogeneity() is None or poly.homogeneity() < 2:
        return None
    for a in extra_directions or ():
        w = check_direction(poly, a)
        if w is not None:
            return w
    evaluator = _CoeffEvaluator(poly)
    d = evaluator.degree
    for start in range(0, budget, BATCH):
        if stop is not None and stop.is_set():
            return None
        idx = range(start, min(budget, start + BATCH))
        A = np.array([direction_for(seed, i, n) for i in idx])
        C = evaluator(A)
        comp = np.zeros((len(idx), d, d))
        comp[:, 0, :] = -C[:, -2::-1]
        if d > 1:
            comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
        roots = np.linalg.eigvals(comp)
        flagged = _nonreal(roots).any(axis=1)
        for k in np.flatnonzero(flagged):
            w = check_direction(poly, A[k], idx[k])
            if w is not None:
                return w
    return None
