"""Sum-of-squares certificates and the semidefinite feasibility solver behind them.

An identity ``target = sum_k g_k * sigma_k + sum_l q_l * h_l`` with
``sigma_k`` sums of squares and ``q_l`` free polynomials is turned into a
linear system over Gram matrices ``G_k`` (``sigma_k = b_k^T G_k b_k``) plus
free coefficient vectors, then solved by :func:`psd_feasibility`, a dense
primal-dual interior-point method (HKM direction, Mehrotra corrector).
"""

from __future__ import annotations

import contextvars
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from math import lcm
from typing import Callable, Sequence, Union

import numpy as np

from .polyring import Exponent, MultiPoly, format_poly, format_rational

log = logging.getLogger(__name__)

PSD_TOL = 1e-7
ID_TOL = 1e-6
STEP_TOL = 1e-9
MAX_ITER = 200
ROUND_DENOMINATOR = 10**6
SMALL_DENOMINATOR = 10**3
STALL_ITERATIONS = 40
EXACT_ROW_LIMIT = 120

STOP: contextvars.ContextVar = contextvars.ContextVar("certify_stop", default=None)


class Infeasible(Exception):
    """No certificate exists for this system; ``dual`` separates the target.

    ``bases`` lists the SOS bases the dual was computed against, so its moment
    matrices ``[dual[b_i + b_j + g]]`` can be rebuilt and checked.
    """

    def __init__(self, note: str, dual: dict | None = None, bases: list | None = None):
        super().__init__(note)
        self.note = note
        self.dual = dual or {}
        self.bases = bases


class NumericFailure(Exception):
    """The solver stalled; this is not evidence of infeasibility."""


class SolverCancelled(Exception):
    pass


@dataclass
class Tolerances:
    psd_tol: float = PSD_TOL
    id_tol: float = ID_TOL
    step_tol: float = STEP_TOL
    max_iter: int = MAX_ITER

    @classmethod
    def coerce(cls, tols) -> "Tolerances":
        if tols is None:
            return cls()
        if isinstance(tols, cls):
            return tols
        return cls(**tols)


def _monomial_str(exp: Exponent, names: Sequence[str] | None) -> str:
    return format_poly(MultiPoly.monomial(exp), names)


@dataclass
class GramCertificate:
    """``sigma = basis^T gram basis`` with ``gram`` positive semidefinite.

    The Gram matrix certifies ``target / scale``.
    """

    basis: list[Exponent]
    gram: np.ndarray
    min_eigenvalue: float
    residual: float
    exact: list[list[Fraction]] | None = None
    scale: Fraction = Fraction(1)
    validated: bool = False

    def polynomial_terms(self) -> dict[Exponent, float]:
        out: dict[Exponent, float] = {}
        for i, bi in enumerate(self.basis):
            for j, bj in enumerate(self.basis):
                e = tuple(x + y for x, y in zip(bi, bj))
                out[e] = out.get(e, 0.0) + float(self.gram[i, j])
        return out

    def exact_poly(self) -> MultiPoly | None:
        if self.exact is None:
            return None
        nv = len(self.basis[0]) if self.basis else 0
        acc: dict = {}
        for i, bi in enumerate(self.basis):
            for j, bj in enumerate(self.basis):
                e = tuple(x + y for x, y in zip(bi, bj))
                acc[e] = acc.get(e, 0) + self.exact[i][j]
        return MultiPoly(nv, acc)

    def to_json(self, names: Sequence[str] | None = None) -> dict:
        out = {
            "basis": [_monomial_str(b, names) for b in self.basis],
            "gram": [[float(x) for x in row] for row in self.gram],
            "residual": float(self.residual),
            "min_eigenvalue": float(self.min_eigenvalue),
            "scale": format_rational(self.scale),
            "validated": self.validated,
        }
        if self.exact is not None:
            out["exact"] = [[format_rational(x) for x in row] for row in self.exact]
        return out


@dataclass
class IdentityCertificate:
    """All blocks of a weighted identity, for ``target / scale``."""

    spec: "IdentitySpec"
    blocks: list[GramCertificate]
    multipliers: list[dict[Exponent, float]]
    residual: float
    scale: Fraction = Fraction(1)
    exact_multipliers: list[MultiPoly] | None = None
    validated: bool = False
    margin: float | None = None

    @property
    def exact(self) -> bool:
        return all(b.exact is not None for b in self.blocks) and (
            not self.multipliers or self.exact_multipliers is not None
        )

    @property
    def min_eigenvalue(self) -> float:
        return min((b.min_eigenvalue for b in self.blocks), default=0.0)

    def to_json(self, names: Sequence[str] | None = None) -> dict:
        return {
            "blocks": [b.to_json(names) for b in self.blocks],
            "multipliers": [
                {_monomial_str(e, names): float(c) for e, c in m.items()} for m in self.multipliers
            ],
            "residual": float(self.residual),
            "min_eigenvalue": float(self.min_eigenvalue),
            "scale": format_rational(self.scale),
            "exact": self.exact,
            "validated": self.validated,
        }


@dataclass
class IdentitySpec:
    """``target = sum(multiplier_k * generator_k)``.

    ``terms`` holds ``(generator, kind)`` with kind ``"sos"`` or ``"free"``.
    Bases default to all monomials allowed by ``degree_bound`` under the
    grading ``weights``; with ``homogeneous`` the degree must match exactly.
    """

    target: MultiPoly
    terms: list[tuple[MultiPoly, str]]
    degree_bound: int
    weights: tuple[int, ...] | None = None
    homogeneous: bool | None = None
    bases: list[list[Exponent] | None] | None = None

    def __post_init__(self):
        for g, kind in self.terms:
            if kind not in ("sos", "free"):
                raise ValueError(f"unknown term kind {kind!r}")
            if g.nvars != self.target.nvars:
                raise ValueError("generators and target must share a ring")
        if self.terms and self.degree_bound < max(self.wdeg(g) for g, _ in self.terms):
            raise ValueError("degree bound below a generator degree")

    @property
    def nvars(self) -> int:
        return self.target.nvars

    def w(self) -> tuple[int, ...]:
        return self.weights or (1,) * self.nvars

    def wdeg(self, poly: MultiPoly) -> int:
        w = self.w()
        return max((sum(a * b for a, b in zip(e, w)) for e, _ in poly.items()), default=0)

    def is_homogeneous(self) -> bool:
        if self.homogeneous is not None:
            return self.homogeneous
        w = self.w()
        for p in [self.target] + [g for g, _ in self.terms]:
            degs = {sum(a * b for a, b in zip(e, w)) for e, _ in p.items()}
            if len(degs) > 1:
                return False
        return self.target.is_zero() or self.wdeg(self.target) == self.degree_bound


def monomials_of_degree(weights: Sequence[int], k: int, exact: bool = True) -> list[Exponent]:
    """Exponents with weighted degree ``k`` (or ``<= k``), descending grlex order."""
    n = len(weights)
    out: list[Exponent] = []

    def rec(i: int, left: int, acc: list[int]):
        if i == n:
            if not exact or left == 0:
                out.append(tuple(acc))
            return
        w = weights[i]
        top = left // w if w > 0 else 0
        for a in range(top, -1, -1):
            acc.append(a)
            rec(i + 1, left - a * w, acc)
            acc.pop()

    if k >= 0:
        rec(0, k, [])
    out.sort(key=lambda e: (sum(e), e), reverse=True)
    return out


def newton_box_basis(target: MultiPoly, candidates: list[Exponent]) -> list[Exponent]:
    """Drop candidates outside half the exponent box of the target's support."""
    if target.is_zero():
        return candidates
    exps = [e for e, _ in target.items()]
    lo = [min(e[i] for e in exps) for i in range(target.nvars)]
    hi = [max(e[i] for e in exps) for i in range(target.nvars)]
    return [
        b for b in candidates if all(2 * b[i] >= lo[i] and 2 * b[i] <= hi[i] for i in range(len(b)))
    ]


def prune_diagonal(target: MultiPoly, basis: list[Exponent]) -> list[Exponent]:
    """Iteratively drop ``b`` whose square ``b^2`` cannot appear in a plain SOS of ``target``.

    If ``2b`` is not in the support and only the diagonal pair produces it,
    the Gram diagonal entry is forced to zero and so is its row.
    """
    support = {e for e, _ in target.items()}
    basis = list(basis)
    changed = True
    while changed:
        changed = False
        offdiag = set()
        for i in range(len(basis)):
            for j in range(i + 1, len(basis)):
                offdiag.add(tuple(x + y for x, y in zip(basis[i], basis[j])))
        keep = []
        for b in basis:
            sq = tuple(2 * x for x in b)
            if sq in support or sq in offdiag:
                keep.append(b)
            else:
                changed = True
        basis = keep
    return basis


def default_basis(spec: IdentitySpec, k: int) -> list[Exponent]:
    g, kind = spec.terms[k]
    w = spec.w()
    room = spec.degree_bound - spec.wdeg(g)
    exact = spec.is_homogeneous()
    if kind == "free":
        return monomials_of_degree(w, room, exact=exact)
    if exact and room % 2:
        return []
    return monomials_of_degree(w, room // 2, exact=exact)


# linear system assembly


@dataclass
class _System:
    monos: list[Exponent]
    A: list[np.ndarray]  # per sos block: (m, n, n)
    F: np.ndarray  # (m, f)
    b: np.ndarray
    bases: list[list[Exponent]]
    free_bases: list[list[Exponent]]
    sos_terms: list[int]
    free_terms: list[int]


def _assemble(spec: IdentitySpec, bases: list[list[Exponent]], target: MultiPoly) -> _System:
    index: dict[Exponent, int] = {}

    def row(e):
        if e not in index:
            index[e] = len(index)
        return index[e]

    for e, _ in target.items():
        row(e)
    sos_entries = []
    free_entries = []
    sos_terms, free_terms = [], []
    sos_bases, free_bases = [], []
    for k, (g, kind) in enumerate(spec.terms):
        basis = bases[k]
        gterms = list(g.items())
        if kind == "sos":
            ent = []
            for i, j in combinations_with_replacement(range(len(basis)), 2):
                bij = tuple(x + y for x, y in zip(basis[i], basis[j]))
                for ge, gc in gterms:
                    ent.append((row(tuple(x + y for x, y in zip(bij, ge))), i, j, float(gc)))
            sos_entries.append((len(basis), ent))
            sos_terms.append(k)
            sos_bases.append(basis)
        else:
            ent = []
            for c, mu in enumerate(basis):
                for ge, gc in gterms:
                    ent.append((row(tuple(x + y for x, y in zip(mu, ge))), c, float(gc)))
            free_entries.append((len(basis), ent))
            free_terms.append(k)
            free_bases.append(basis)
    m = len(index)
    A = []
    for n, ent in sos_entries:
        M = np.zeros((m, n, n))
        for r, i, j, c in ent:
            M[r, i, j] += c
            if i != j:
                M[r, j, i] += c
        A.append(M)
    nfree = sum(n for n, _ in free_entries)
    F = np.zeros((m, nfree))
    off = 0
    for n, ent in free_entries:
        for r, c, v in ent:
            F[r, off + c] += v
        off += n
    b = np.zeros(m)
    for e, c in target.items():
        b[index[e]] = float(c)
    monos = [None] * m
    for e, r in index.items():
        monos[r] = e
    return _System(monos, A, F, b, sos_bases, free_bases, sos_terms, free_terms)


# the solver


@dataclass
class FeasiblePoint:
    X: list[np.ndarray]
    z: np.ndarray
    iterations: int
    diagnostics: dict = field(default_factory=dict)


def _check_stop():
    ev = STOP.get()
    if ev is not None and ev.is_set():
        raise SolverCancelled()


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    if X.shape[0] == 0:
        return np.inf
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Linv = np.linalg.inv(L)
    W = Linv @ dX @ Linv.T
    lam = np.linalg.eigvalsh((W + W.T) / 2).min()
    return np.inf if lam >= 0 else -1.0 / lam


def psd_feasibility(
    A: Sequence[np.ndarray],
    b: np.ndarray,
    F: np.ndarray | None = None,
    tols: Tolerances | dict | None = None,
) -> FeasiblePoint:
    """Find ``X_k >= 0`` and free ``z`` with ``sum_k <A_k[i], X_k> + (F z)_i = b_i``.

    Solves ``min sum tr(X_k)`` from an infeasible start and stops as soon as
    the iterate is primal feasible; the iterate is then interior.  Raises
    :class:`Infeasible` with a dual vector ``y`` such that
    ``sum_i y_i A_k[i] >= 0``, ``F^T y = 0`` and ``b^T y < 0``.
    """
    tols = Tolerances.coerce(tols)
    A = [np.asarray(a, dtype=float) for a in A]
    b = np.asarray(b, dtype=float)
    m = b.shape[0]
    if F is None:
        F = np.zeros((m, 0))
    sizes = [a.shape[1] for a in A]
    if m == 0 or not np.any(b):
        return FeasiblePoint([np.zeros((n, n)) for n in sizes], np.zeros(F.shape[1]), 0)

    # whiten the constraints: orthonormal rows, dependent rows removed
    flat = np.hstack([a.reshape(m, -1) for a in A] + [F]) if (A or F.shape[1]) else np.zeros((m, 0))
    gram = flat @ flat.T
    lam, V = np.linalg.eigh(gram)
    keep = lam > 1e-12 * max(lam.max(), 1e-300)
    if not keep.any():
        y = -b / np.linalg.norm(b)
        raise Infeasible("target has monomials no term can produce", {"y": y})
    Vr = V[:, keep]
    T = (Vr / np.sqrt(lam[keep])).T  # r x m
    b_perp = b - Vr @ (Vr.T @ b)
    if np.linalg.norm(b_perp) > 1e-9 * (1.0 + np.linalg.norm(b)):
        y = -b_perp / np.linalg.norm(b_perp)
        raise Infeasible("linear system has no solution", {"y": y})
    At = [np.einsum("rm,mij->rij", T, a) for a in A]
    bt = T @ b
    Ft = T @ F
    if Ft.shape[1]:
        U, sv, _ = np.linalg.svd(Ft, full_matrices=False)
        Q = U[:, sv > 1e-10 * max(sv.max(), 1e-300)] if sv.size else U[:, :0]
    else:
        Q = np.zeros((bt.shape[0], 0))
    r, f = bt.shape[0], Q.shape[1]
    Aflat = [a.reshape(r, -1) for a in At]

    def A_op(Xs):
        out = np.zeros(r)
        for af, X in zip(Aflat, Xs):
            out += af @ X.ravel()
        return out

    def AT_op(y):
        return [(af.T @ y).reshape(n, n) for af, n in zip(Aflat, sizes)]

    Ntot = sum(sizes)
    anorm = [np.sqrt(sum((af[i] ** 2).sum() for af in Aflat)) for i in range(r)]
    xi = max(10.0, np.sqrt(max(sizes, default=1)), max((1 + abs(bt[i])) / (1 + anorm[i]) for i in range(r)))
    eta = max(10.0, np.sqrt(max(sizes, default=1)))
    X = [xi * np.eye(n) for n in sizes]
    S = [eta * np.eye(n) for n in sizes]
    C = [np.eye(n) for n in sizes]
    y = np.zeros(r)
    w = np.zeros(f)
    bnorm = np.linalg.norm(bt)
    stalls = 0
    diag: dict = {}
    start = None
    best, since_best = np.inf, 0

    for it in range(tols.max_iter):
        _check_stop()
        AX = A_op(X)
        rp = bt - AX - Q @ w
        ATy = AT_op(y)
        Rd = [c - aty - s for c, aty, s in zip(C, ATy, S)]
        rf = -Q.T @ y
        mu = sum((x * s).sum() for x, s in zip(X, S)) / max(Ntot, 1)
        pinf = np.linalg.norm(rp) / (1.0 + bnorm)

        if start is None:
            start = (pinf, mu)
        if pinf < 0.5 * best:
            best, since_best = pinf, 0
        else:
            since_best += 1
            if since_best > STALL_ITERATIONS:
                raise NumericFailure(f"primal infeasibility stalled at {pinf:.3g} (iteration {it})")
        if pinf <= tols.step_tol:
            diag.update(iterations=it, pinf=pinf, mu=mu)
            X = _recenter(X, Aflat, Q, bt, sizes, diag)
            return _finish(A, b, F, X, diag, tols)

        by = bt @ y
        if by > 0:
            yh = y / by
            yh = yh - Q @ (Q.T @ yh)
            Z = [-(a) for a in AT_op(yh)]
            zmin = min((np.linalg.eigvalsh(z_).min() for z_ in Z if z_.size), default=0.0)
            znorm = max((np.abs(z_).max() for z_ in Z if z_.size), default=0.0)
            if zmin >= -1e-8 * max(1.0, znorm) and by > 1e3:
                # map back to the original constraint rows
                y_orig = -(T.T @ yh)
                raise Infeasible(
                    f"dual ray found after {it} iterations (b.y = -1, min eig of A^T y = {zmin:.3g})",
                    {"y": y_orig / abs(b @ y_orig)},
                )

        try:
            Sinv = [np.linalg.inv(s) for s in S]
        except np.linalg.LinAlgError:
            raise NumericFailure(f"dual slack became singular at iteration {it}") from None
        M = np.zeros((r, r))
        for af, Xk, Si, n in zip(Aflat, X, Sinv, sizes):
            Ak = af.reshape(r, n, n)
            Tk = np.matmul(np.matmul(Xk[None], Ak), Si[None])
            M += af @ Tk.reshape(r, -1).T
        M = (M + M.T) / 2
        if f:
            K = np.block([[M, Q], [Q.T, np.zeros((f, f))]])
        else:
            K = M

        def solve(Rc):
            corr = [Xk @ R @ Si for Xk, R, Si in zip(X, Rd, Sinv)]
            rhs = rp - A_op(Rc) + A_op(corr)
            full = np.concatenate([rhs, rf]) if f else rhs
            try:
                sol = np.linalg.solve(K, full)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(K, full, rcond=None)[0]
            dy, dw = sol[:r], sol[r:]
            dS = [R - a for R, a in zip(Rd, AT_op(dy))]
            dX = []
            for Rck, Xk, dSk, Si in zip(Rc, X, dS, Sinv):
                t = Xk @ dSk @ Si
                dX.append(Rck - (t + t.T) / 2)
            return dX, dy, dw, dS

        def steps(dX, dS):
            ap = min([_max_step(x, d) for x, d in zip(X, dX)] + [np.inf])
            ad = min([_max_step(s, d) for s, d in zip(S, dS)] + [np.inf])
            return ap, ad

        # predictor
        dXa, dya, dwa, dSa = solve([-x for x in X])
        ap, ad = steps(dXa, dSa)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = sum(((x + ap * dx) * (s + ad * ds)).sum() for x, dx, s, ds in zip(X, dXa, S, dSa)) / max(Ntot, 1)
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        # keep mu from outrunning primal feasibility, or the slack degenerates first
        if mu > 0 and start[0] > 0:
            sigma = min(1.0, max(sigma, 0.1 * start[1] * (pinf / start[0]) / mu))
        # corrector
        Rc = []
        for Xk, Si, dx, ds in zip(X, Sinv, dXa, dSa):
            t = dx @ ds @ Si
            Rc.append(sigma * mu * Si - Xk - (t + t.T) / 2)
        dX, dy, dw, dS = solve(Rc)
        ap, ad = steps(dX, dS)
        gamma = 0.9 + 0.09 * min(1.0, ap, ad)
        ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
        if ap < 1e-12 and ad < 1e-12:
            stalls += 1
            if stalls > 5:
                raise NumericFailure(f"step lengths collapsed at iteration {it}")
        X = [x + ap * d for x, d in zip(X, dX)]
        X = [(x + x.T) / 2 for x in X]
        S = [s + ad * d for s, d in zip(S, dS)]
        S = [(s + s.T) / 2 for s in S]
        y = y + ad * dy
        w = w + ap * dw

    raise NumericFailure(f"no convergence in {tols.max_iter} iterations (pinf={pinf:.3g}, mu={mu:.3g})")


def _recenter(X, Aflat, Q, bt, sizes, diag, max_steps: int = 40):
    """Damped Newton steps toward the analytic center of the feasible set.

    Minimizes ``-sum log det X_k`` subject to the (whitened) constraints, so
    the returned point has as much eigenvalue slack as the set allows.
    """
    r, f = bt.shape[0], Q.shape[1]
    steps = 0
    for steps in range(max_steps):
        _check_stop()
        Xs = [x for x in X]
        M = np.zeros((r, r))
        for af, Xk, n in zip(Aflat, Xs, sizes):
            Ak = af.reshape(r, n, n)
            Tk = np.matmul(np.matmul(Xk[None], Ak), Xk[None])
            M += af @ Tk.reshape(r, -1).T
        M = (M + M.T) / 2
        AX = sum((af @ x.ravel() for af, x in zip(Aflat, Xs)), np.zeros(r))
        resid = bt - AX
        # Delta X = X - X (A^T lam) X; keep A(X + Delta X) + Q w' = b
        rhs = np.concatenate([AX - resid, np.zeros(f)]) if f else AX - resid
        K = np.block([[M, Q], [Q.T, np.zeros((f, f))]]) if f else M
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        lam = sol[:r]
        dX = []
        dec = 0.0
        for af, Xk, n in zip(Aflat, Xs, sizes):
            Z = (af.T @ lam).reshape(n, n)
            d = Xk - Xk @ Z @ Xk
            d = (d + d.T) / 2
            dX.append(d)
            try:
                Xi = np.linalg.inv(Xk)
            except np.linalg.LinAlgError:
                # the feasible set has no interior here; keep the point as is
                diag["recenter_steps"] = steps
                return X
            dec += float(np.sum((Xi @ d) * (d @ Xi)))
        dec = np.sqrt(max(dec, 0.0))
        alpha = 1.0 if dec < 0.25 else 1.0 / (1.0 + dec)
        X = [x + alpha * d for x, d in zip(X, dX)]
        if dec < 1e-7:
            break
    diag["recenter_steps"] = steps + 1
    diag["recenter_min_eig"] = min((float(np.linalg.eigvalsh(x).min()) for x in X if x.size), default=0.0)
    return X


def _finish(A, b, F, X, diag, tols) -> FeasiblePoint:
    """Polish onto the affine set and recover the free variables."""
    m = b.shape[0]
    sizes = [x.shape[0] for x in X]
    flat = np.hstack([a.reshape(m, -1) for a in A] + [F])
    x0 = np.concatenate([x.ravel() for x in X] + [np.zeros(F.shape[1])])
    if F.shape[1]:
        AX = sum(a.reshape(m, -1) @ x.ravel() for a, x in zip(A, X)) if A else np.zeros(m)
        x0[-F.shape[1]:] = np.linalg.lstsq(F, b - AX, rcond=None)[0]
    resid = b - flat @ x0
    corr = np.linalg.lstsq(flat, resid, rcond=None)[0]
    x1 = x0 + corr
    out, pos = [], 0
    ok = True
    for n in sizes:
        blk = x1[pos:pos + n * n].reshape(n, n)
        blk = (blk + blk.T) / 2
        pos += n * n
        if n and np.linalg.eigvalsh(blk).min() < -tols.psd_tol:
            ok = False
        out.append(blk)
    if not ok:
        out, pos = [], 0
        for n in sizes:
            blk = x0[pos:pos + n * n].reshape(n, n)
            out.append((blk + blk.T) / 2)
            pos += n * n
        x1 = x0
    diag["polished"] = ok
    return FeasiblePoint(out, x1[pos:], diag.get("iterations", 0), diag)


# certificates


def _resolve_bases(spec: IdentitySpec, target: MultiPoly) -> list[list[Exponent]]:
    bases = []
    for k in range(len(spec.terms)):
        given = spec.bases[k] if spec.bases else None
        bases.append(list(given) if given is not None else default_basis(spec, k))
    return prune_forced_zeros(spec, target, bases)


def _add(a: Exponent, b: Exponent) -> Exponent:
    return tuple(x + y for x, y in zip(a, b))


def prune_forced_zeros(spec: IdentitySpec, target: MultiPoly, bases: list[list[Exponent]]) -> list[list[Exponent]]:
    """Drop SOS basis elements whose Gram diagonal is forced to zero.

    If ``2b + gamma`` (``gamma`` in the generator's support) is missing from
    the target and the diagonal entry of ``b`` is its only producer in the
    whole identity, that entry vanishes and so does its row.  Repeats until
    stable; this is exact facial reduction, so feasibility is unchanged.
    """
    support = {e for e, _ in target.items()}
    gens = [[e for e, _ in g.items()] for g, _ in spec.terms]
    kinds = [kind for _, kind in spec.terms]
    bases = [list(b) for b in bases]
    while True:
        count: dict[Exponent, int] = {}
        for basis, gsup, kind in zip(bases, gens, kinds):
            if kind == "sos":
                for i in range(len(basis)):
                    for j in range(i, len(basis)):
                        bij = _add(basis[i], basis[j])
                        for ge in gsup:
                            a = _add(bij, ge)
                            count[a] = count.get(a, 0) + 1
            else:
                for mu in basis:
                    for ge in gsup:
                        a = _add(mu, ge)
                        count[a] = count.get(a, 0) + 1
        changed = False
        for k, (basis, gsup, kind) in enumerate(zip(bases, gens, kinds)):
            if kind != "sos":
                continue
            keep = []
            for b in basis:
                sq = _add(b, b)
                forced = any(
                    count.get(_add(sq, ge), 0) == 1 and _add(sq, ge) not in support for ge in gsup
                )
                if forced:
                    changed = True
                else:
                    keep.append(b)
            bases[k] = keep
        if not changed:
            return bases


def reconstruct(cert: IdentityCertificate) -> float:
    """Independent float reconstruction; max coefficient error vs ``target/scale``."""
    spec = cert.spec
    acc: dict[Exponent, float] = {}
    sos_iter = iter(cert.blocks)
    free_iter = iter(cert.multipliers)
    for g, kind in spec.terms:
        part = next(sos_iter).polynomial_terms() if kind == "sos" else next(free_iter)
        for e, c in part.items():
            for ge, gc in g.items():
                te = tuple(x + y for x, y in zip(e, ge))
                acc[te] = acc.get(te, 0.0) + c * float(gc)
    for e, c in spec.target.items():
        acc[e] = acc.get(e, 0.0) - float(Fraction(c) / cert.scale)
    return max((abs(v) for v in acc.values()), default=0.0)


def absorption_margin(cert: IdentityCertificate) -> float | None:
    """Spare eigenvalue of the first block after absorbing the exact residual.

    The float certificate is read as exact binary rationals; the residual
    ``r`` is then exact.  Each residual monomial is moved into one entry of
    the first Gram block (generator 1), a perturbation of spectral norm at
    most ``||r||_2``.  A positive return value means the perturbed block is
    still PSD, so an exact identity exists.  ``None`` if not applicable.
    """
    spec = cert.spec
    if not cert.blocks or spec.terms[0][1] != "sos" or spec.terms[0][0] != 1:
        return None
    acc: dict[Exponent, Fraction] = {}
    sos_iter = iter(cert.blocks)
    free_iter = iter(cert.multipliers)
    for g, kind in spec.terms:
        if kind == "sos":
            blk = next(sos_iter)
            part: dict[Exponent, Fraction] = {}
            for i, bi in enumerate(blk.basis):
                for j in range(i, len(blk.basis)):
                    e = tuple(x + y for x, y in zip(bi, blk.basis[j]))
                    v = Fraction(float(blk.gram[i, j]))
                    part[e] = part.get(e, Fraction(0)) + (v if i == j else 2 * v)
        else:
            part = {e: Fraction(c) for e, c in next(free_iter).items()}
        for e, c in part.items():
            for ge, gc in g.items():
                te = tuple(x + y for x, y in zip(e, ge))
                acc[te] = acc.get(te, Fraction(0)) + c * gc
    for e, c in spec.target.items():
        acc[e] = acc.get(e, Fraction(0)) - Fraction(c) / cert.scale
    resid = [float(v) for v in acc.values() if v]
    first = cert.blocks[0]
    pairs = {tuple(x + y for x, y in zip(a, b)) for a in first.basis for b in first.basis}
    if any(v and e not in pairs for e, v in acc.items()):
        return None
    G = first.gram
    n = G.shape[0]
    lam = float(np.linalg.eigvalsh(G).min()) if n else 0.0
    bound = float(np.sqrt(sum(v * v for v in resid)))
    # slack for the floating eigenvalue computation itself
    fuzz = 1e-13 * n * max(1.0, float(np.abs(G).max())) if n else 0.0
    return lam - bound - fuzz


def weighted_sos_identity(spec: IdentitySpec, tols=None, require_validated: bool = False) -> IdentityCertificate:
    """Solve for all multipliers of ``spec``; raises :class:`Infeasible` or :class:`NumericFailure`.

    With ``require_validated`` a certificate that is neither exact nor
    robust under :func:`absorption_margin` is reported as a numeric failure.
    """
    tols = Tolerances.coerce(tols)
    target = spec.target
    scale = max((abs(Fraction(c)) for _, c in target.items()), default=Fraction(1))
    normalized = target.scale(Fraction(1) / scale)
    bases = _resolve_bases(spec, normalized)
    system = _assemble(spec, bases, normalized)
    try:
        point = psd_feasibility(system.A, system.b, system.F, tols)
    except Infeasible as exc:
        y = exc.dual.get("y")
        dual = {}
        if y is not None:
            dual = {system.monos[i]: float(v) for i, v in enumerate(y) if abs(v) > 1e-14}
        raise Infeasible(exc.note, dual, system.bases) from None
    blocks = []
    for X, basis in zip(point.X, system.bases):
        lam = float(np.linalg.eigvalsh(X).min()) if X.size else 0.0
        blocks.append(GramCertificate(basis, X, lam, 0.0, scale=scale))
    mults = []
    off = 0
    for basis in system.free_bases:
        coeffs = point.z[off:off + len(basis)]
        off += len(basis)
        mults.append({e: float(c) for e, c in zip(basis, coeffs) if c != 0.0})
    cert = IdentityCertificate(spec, blocks, mults, 0.0, scale)
    cert.residual = reconstruct(cert)
    for blk in blocks:
        blk.residual = cert.residual
    if cert.min_eigenvalue < -tols.psd_tol:
        raise NumericFailure(f"Gram matrix not PSD (min eigenvalue {cert.min_eigenvalue:.3g})")
    if cert.residual > tols.id_tol:
        raise NumericFailure(f"identity residual {cert.residual:.3g} exceeds {tols.id_tol}")
    # small denominators land exactly on low-rank faces; the fine grid keeps slack elsewhere
    for rounder in (_small_fraction, _grid):
        _try_exact(cert, system, rounder)
        if cert.exact:
            break
    if not cert.exact and system.F.shape[1]:
        _try_exact_free(cert, system)
    if cert.exact:
        cert.validated = True
    else:
        cert.margin = absorption_margin(cert)
        cert.validated = cert.margin is not None and cert.margin > 0
    for blk in blocks:
        blk.validated = cert.validated
    if require_validated and not cert.validated:
        raise NumericFailure(
            f"certificate not validated (min eigenvalue {cert.min_eigenvalue:.3g}, margin {cert.margin})"
        )
    return cert


def sos_decompose(
    target: MultiPoly,
    basis_rule: Union[str, Sequence[Exponent], Callable[[MultiPoly], list[Exponent]]] = "auto",
    tols=None,
    require_validated: bool = False,
) -> GramCertificate:
    """Gram certificate for ``target`` as a single sum of squares."""
    if callable(basis_rule):
        basis = list(basis_rule(target))
    elif isinstance(basis_rule, str):
        if basis_rule != "auto":
            raise ValueError(f"unknown basis rule {basis_rule!r}")
        deg = target.total_degree()
        if target.is_zero():
            basis = []
        elif target.is_homogeneous():
            if deg % 2:
                raise Infeasible("odd degree target cannot be a sum of squares")
            basis = monomials_of_degree((1,) * target.nvars, deg // 2)
        else:
            basis = monomials_of_degree((1,) * target.nvars, deg // 2, exact=False)
        basis = newton_box_basis(target, basis)
    else:
        basis = list(basis_rule)
    basis = prune_diagonal(target, basis)
    nv = target.nvars
    D = max([target.total_degree()] + [2 * sum(b) for b in basis] + [0])
    spec = IdentitySpec(
        target, [(MultiPoly.constant(nv, 1), "sos")], D, homogeneous=False, bases=[basis]
    )
    cert = weighted_sos_identity(spec, tols, require_validated)
    return cert.blocks[0]


def gram_polynomial(basis: Sequence[Exponent], gram) -> MultiPoly:
    """Exact ``basis^T gram basis`` for a rational Gram matrix."""
    nv = len(basis[0]) if basis else 0
    acc: dict = {}
    for i, bi in enumerate(basis):
        for j, bj in enumerate(basis):
            e = tuple(x + y for x, y in zip(bi, bj))
            acc[e] = acc.get(e, 0) + Fraction(gram[i][j])
    return MultiPoly(nv, acc)


# exact rounding


def _solve_exact(rows: list[dict[int, Fraction]], rhs: list[Fraction], ncols: int) -> list[Fraction] | None:
    """Some solution of a sparse rational system (free columns set to zero), or ``None``."""
    pivots: list[tuple[int, dict[int, Fraction], Fraction]] = []
    for row, r in zip(rows, rhs):
        row = dict(row)
        for col, prow, pr in pivots:
            c = row.get(col)
            if c:
                for k, v in prow.items():
                    nv = row.get(k, Fraction(0)) - c * v
                    if nv:
                        row[k] = nv
                    else:
                        row.pop(k, None)
                r -= c * pr
        if not row:
            if r:
                return None
            continue
        col = min(row, key=lambda k: (len(str(row[k])), k))
        pv = row[col]
        prow = {k: v / pv for k, v in row.items()}
        pr = r / pv
        # keep earlier pivot rows reduced in the new pivot column
        updated = []
        for c2, prow2, pr2 in pivots:
            f = prow2.get(col)
            if f:
                for k, v in prow.items():
                    nv = prow2.get(k, Fraction(0)) - f * v
                    if nv:
                        prow2[k] = nv
                    else:
                        prow2.pop(k, None)
                pr2 -= f * pr
            updated.append((c2, prow2, pr2))
        pivots = updated + [(col, prow, pr)]
    x = [Fraction(0)] * ncols
    for col, prow, pr in pivots:
        x[col] = pr
    return x


def _try_exact_free(cert: IdentityCertificate, system: _System) -> None:
    """Round each Gram block as ``L L^T`` (exactly PSD), then solve for the free multipliers exactly."""
    spec = cert.spec
    if len(system.monos) > 4 * EXACT_ROW_LIMIT:
        return
    exact_blocks = []
    for blk in cert.blocks:
        n = len(blk.basis)
        if n == 0:
            exact_blocks.append([])
            continue
        lam, V = np.linalg.eigh(blk.gram)
        keep = lam > 1e-7 * max(1.0, lam.max())
        L = V[:, keep] * np.sqrt(lam[keep])
        Lq = [[_grid(v) for v in row] for row in L]
        r = L.shape[1]
        Gq = [[sum((Lq[i][k] * Lq[j][k] for k in range(r)), Fraction(0)) for j in range(n)] for i in range(n)]
        exact_blocks.append(Gq)
    target = spec.target.scale(Fraction(1) / cert.scale)
    rest = target
    sb = iter(zip(cert.blocks, exact_blocks))
    for g, kind in spec.terms:
        if kind == "sos":
            blk, Gq = next(sb)
            if blk.basis:
                rest = rest - gram_polynomial(blk.basis, Gq) * g
    # columns: coefficients of every free multiplier
    cols: list[tuple[int, Exponent]] = []
    rows: dict[Exponent, dict[int, Fraction]] = {}
    fk = 0
    for g, kind in spec.terms:
        if kind != "free":
            continue
        for mu in system.free_bases[fk]:
            ci = len(cols)
            cols.append((fk, mu))
            for ge, gc in g.items():
                e = _add(mu, ge)
                rows.setdefault(e, {})[ci] = rows.setdefault(e, {}).get(ci, Fraction(0)) + Fraction(gc)
        fk += 1
    for e, _ in rest.items():
        rows.setdefault(e, {})
    keys = list(rows)
    sol = _solve_exact([rows[e] for e in keys], [Fraction(rest.coeff(e)) for e in keys], len(cols))
    if sol is None:
        return
    mults = [dict() for _ in system.free_bases]
    for (k, mu), v in zip(cols, sol):
        if v:
            mults[k][mu] = v
    exact_mults = [MultiPoly(spec.nvars, m) for m in mults]
    total = MultiPoly.zero(spec.nvars)
    sb = iter(zip(cert.blocks, exact_blocks))
    fm = iter(exact_mults)
    for g, kind in spec.terms:
        if kind == "sos":
            blk, Gq = next(sb)
            part = gram_polynomial(blk.basis, Gq) if blk.basis else MultiPoly.zero(spec.nvars)
        else:
            part = next(fm)
        total = total + part * g
    if total != target:
        return
    for blk, Gq in zip(cert.blocks, exact_blocks):
        blk.exact = Gq
    cert.exact_multipliers = exact_mults
    cert.residual = 0.0
    for blk in cert.blocks:
        blk.residual = 0.0


def _exact_solve_min_norm(rows: list[dict[int, Fraction]], rhs: list[Fraction]) -> dict[int, Fraction] | None:
    """Minimal-norm correction ``v`` with ``rows . v = rhs`` (exact); ``None`` if inconsistent."""
    m = len(rows)
    G = [[Fraction(0)] * m for _ in range(m)]
    for i in range(m):
        for j in range(i, m):
            ri, rj = rows[i], rows[j]
            if len(ri) > len(rj):
                ri, rj = rj, ri
            s = sum((c * rj[k] for k, c in ri.items() if k in rj), Fraction(0))
            G[i][j] = G[j][i] = s
    aug = [G[i][:] + [rhs[i]] for i in range(m)]
    piv_cols = []
    r = 0
    for c in range(m):
        p = next((i for i in range(r, m) if aug[i][c] != 0), None)
        if p is None:
            continue
        aug[r], aug[p] = aug[p], aug[r]
        pv = aug[r][c]
        aug[r] = [x / pv for x in aug[r]]
        for i in range(m):
            if i != r and aug[i][c] != 0:
                f = aug[i][c]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[r])]
        piv_cols.append(c)
        r += 1
    for i in range(r, m):
        if aug[i][m] != 0:
            return None
    lam = [Fraction(0)] * m
    for i, c in enumerate(piv_cols):
        lam[c] = aug[i][m]
    v: dict[int, Fraction] = {}
    for i, row in enumerate(rows):
        if lam[i]:
            for k, c in row.items():
                v[k] = v.get(k, Fraction(0)) + c * lam[i]
    return v


def _grid(x: float) -> Fraction:
    """Nearest point of the grid with denominator ``ROUND_DENOMINATOR``."""
    return Fraction(round(float(x) * ROUND_DENOMINATOR), ROUND_DENOMINATOR)


def exact_psd(G: Sequence[Sequence]) -> bool:
    """Exact PSD test: symmetric fraction-free elimination on the integer-scaled matrix."""
    n = len(G)
    Gf = np.array([[float(x) for x in row] for row in G])
    if n and np.linalg.eigvalsh(Gf).min() < -1e-9 * max(1.0, np.abs(Gf).max()):
        return False
    den = 1
    for row in G:
        for x in row:
            den = lcm(den, Fraction(x).denominator)
    M = [[int(Fraction(x) * den) for x in row] for row in G]
    active = list(range(n))
    prev = 1
    while active:
        p = next((i for i in active if M[i][i] != 0), None)
        if p is None:
            return all(M[i][j] == 0 for i in active for j in active)
        if M[p][p] < 0:
            return False
        active.remove(p)
        pv = M[p][p]
        for i in active:
            for j in active:
                if j < i:
                    continue
                v = (pv * M[i][j] - M[i][p] * M[p][j]) // prev
                M[i][j] = M[j][i] = v
        prev = pv
    return True


def _small_fraction(x: float) -> Fraction:
    """Continued-fraction rounding with a small denominator cap."""
    return Fraction(float(x)).limit_denominator(SMALL_DENOMINATOR)


def _try_exact(cert: IdentityCertificate, system: _System, rounder=_grid) -> None:
    """Round to rationals, project onto the affine constraints, accept if exactly PSD."""
    spec = cert.spec
    if len(system.monos) > EXACT_ROW_LIMIT and system.F.shape[1]:
        return
    # variables: upper-triangular Gram entries of each block, then free coefficients
    var_of: list[tuple] = []
    values: list[Fraction] = []
    for k, blk in enumerate(cert.blocks):
        n = len(blk.basis)
        for i in range(n):
            for j in range(i, n):
                var_of.append(("g", k, i, j))
                values.append(rounder(blk.gram[i, j]))
    for k, basis in enumerate(system.free_bases):
        mult = cert.multipliers[k]
        for e in basis:
            var_of.append(("q", k, e))
            values.append(rounder(mult.get(e, 0.0)))
    rows: dict[Exponent, dict[int, Fraction]] = {}
    vi = 0
    sos_k = free_k = 0
    for g, kind in spec.terms:
        gterms = [(e, Fraction(c)) for e, c in g.items()]
        if kind == "sos":
            basis = system.bases[sos_k]
            sos_k += 1
            for i in range(len(basis)):
                for j in range(i, len(basis)):
                    mult = 1 if i == j else 2
                    bij = tuple(x + y for x, y in zip(basis[i], basis[j]))
                    for ge, gc in gterms:
                        e = tuple(x + y for x, y in zip(bij, ge))
                        r = rows.setdefault(e, {})
                        r[vi] = r.get(vi, Fraction(0)) + mult * gc
                    vi += 1
        else:
            basis = system.free_bases[free_k]
            free_k += 1
            for mu in basis:
                for ge, gc in gterms:
                    e = tuple(x + y for x, y in zip(mu, ge))
                    r = rows.setdefault(e, {})
                    r[vi] = r.get(vi, Fraction(0)) + gc
                vi += 1
    target = spec.target.scale(Fraction(1) / cert.scale)
    for e, _ in target.items():
        rows.setdefault(e, {})
    keys = list(rows)
    row_list = [rows[e] for e in keys]
    resid = []
    for e, row in zip(keys, row_list):
        val = sum((c * values[k] for k, c in row.items()), Fraction(0))
        resid.append(Fraction(target.coeff(e)) - val)
    disjoint = len({k for row in row_list for k in row}) == sum(len(row) for row in row_list)
    if disjoint:
        corr: dict[int, Fraction] | None = {}
        for row, r in zip(row_list, resid):
            if not r:
                continue
            norm2 = sum((c * c for c in row.values()), Fraction(0))
            if norm2 == 0:
                corr = None
                break
            for k, c in row.items():
                corr[k] = corr.get(k, Fraction(0)) + r * c / norm2
    elif len(row_list) <= EXACT_ROW_LIMIT:
        corr = _exact_solve_min_norm(row_list, resid)
    else:
        return
    if corr is None:
        return
    for k, c in corr.items():
        values[k] += c
    exact_blocks = []
    vi = 0
    for blk in cert.blocks:
        n = len(blk.basis)
        Gq = [[Fraction(0)] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                Gq[i][j] = Gq[j][i] = values[vi]
                vi += 1
        if n and not exact_psd(Gq):
            return
        exact_blocks.append(Gq)
    exact_mults = []
    for k, basis in enumerate(system.free_bases):
        nv = spec.nvars
        exact_mults.append(MultiPoly(nv, {e: values[vi + i] for i, e in enumerate(basis)}))
        vi += len(basis)
    # re-verify the identity in exact arithmetic
    total = MultiPoly.zero(spec.nvars)
    sb = iter(zip(cert.blocks, exact_blocks))
    fm = iter(exact_mults)
    for g, kind in spec.terms:
        if kind == "sos":
            blk, Gq = next(sb)
            part = gram_polynomial(blk.basis, Gq) if blk.basis else MultiPoly.zero(spec.nvars)
        else:
            part = next(fm)
        total = total + part * g
    if total != target:
        return
    for blk, Gq in zip(cert.blocks, exact_blocks):
        blk.exact = Gq
    cert.exact_multipliers = exact_mults
    cert.residual = 0.0
    for blk in cert.blocks:
        blk.residual = 0.0
