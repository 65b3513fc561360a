"""Acceptance gate: one PASS/FAIL line per criterion, each under a minute."""

import json
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import jsonschema
import pytest

import oracles
from conftest import random_form, random_xform
from test_structmats import oracle_case, uni
from hyperbolicity import corpus as corpus_mod
from hyperbolicity.certify import sos_decompose
from hyperbolicity.cli import SCHEMA_PATH, RunConfig, run
from hyperbolicity.corpus import example_cubic, fermat_quartic
from hyperbolicity.hermite_test import hermite_basis, replay_gram
from hyperbolicity.intersection_test import complex_split, full_resultant, resultant_factor
from hyperbolicity.nuij_test import npath_discriminant, nuij_path
from hyperbolicity.polyring import MultiPoly, format_poly, parse_poly
from hyperbolicity.structmats import discriminant, hermite_form, hermite_matrix, rank_signature, univariate_view

TIME_LIMIT = 60.0
METHODS = ("hermite", "intersection", "nuij")
SCHEMA = json.loads(SCHEMA_PATH.read_text())

HERMITE_VARS = ["x1", "x2", "u1", "u2", "u3"]
HERMITE_GOLDEN = (
    "3*u1^2 + u1*u2*x1 + 9/4*u2^2*x1^2 + 9/2*u1*u3*x1^2 + 1/4*u2*u3*x1^3 + 33/16*u3^2*x1^4"
    " + u2^2*x2^2 + 2*u1*u3*x2^2 + 3/2*u2*u3*x1*x2^2 + 5/2*u3^2*x1^2*x2^2 + 1/2*u3^2*x2^4"
)
KNOWN_SQUARES = [
    (Fraction(3), "3/4*x1^2*u3 + 1/3*x2^2*u3 + 1/6*x1*u2 + u1"),
    (Fraction(13, 6), "-3/26*x1^2*u3 + 1/26*x2^2*u3 + x1*u2"),
    (Fraction(1), "x1*x2*u3 + 1/2*x2*u2"),
    (Fraction(3, 4), "x2*u2"),
    (Fraction(9, 26), "x1^2*u3 + 1/36*x2^2*u3"),
    (Fraction(47, 288), "x2^2*u3"),
]
QUARTIC_GOLDEN = "256*(t2^4 - x1^4 - x2^4)*(4*t2^4 + x1^4 + x2^4)^2"
DELTA_N_GOLDEN = (
    "29469/4*s^6*x1^6+51283/2*s^6*x1^4*x2^2-3316*s^6*x1^3*x2^3+392497/16*s^6*x1^2*x2^4"
    "-36*s^6*x1*x2^5+12169/2*s^6*x2^6-39350*s^5*x1^6-143390*s^5*x1^4*x2^2+20316*s^5*x1^3*x2^3"
    "-139200*s^5*x1^2*x2^4+108*s^5*x1*x2^5-34632*s^5*x2^6+89581*s^4*x1^6+338905*s^4*x1^4*x2^2"
    "-51420*s^4*x1^3*x2^3+332832*s^4*x1^2*x2^4-108*s^4*x1*x2^5+82980*s^4*x2^6-111308*s^3*x1^6"
    "-433116*s^3*x1^4*x2^2+68980*s^3*x1^3*x2^3-429120*s^3*x1^2*x2^4+36*s^3*x1*x2^5"
    "-107136*s^3*x2^6+79632*s^2*x1^6+315648*s^2*x1^4*x2^2-51840*s^2*x1^3*x2^3"
    "+314640*s^2*x1^2*x2^4+78624*s^2*x2^6-31104*s*x1^6-124416*s*x1^4*x2^2+20736*s*x1^3*x2^3"
    "-124416*s*x1^2*x2^4-31104*s*x2^6+5184*x1^6+20736*x1^4*x2^2-3456*x1^3*x2^3"
    "+20736*x1^2*x2^4+5184*x2^6"
)


@contextmanager
def criterion(capsys, number: int, title: str, spent: float = 0.0):
    start = time.perf_counter() - spent
    ok = False
    try:
        yield
        elapsed = time.perf_counter() - start
        assert elapsed < TIME_LIMIT, f"took {elapsed:.1f} s"
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({elapsed:.1f} s)")


def flip(p: MultiPoly, var: int) -> MultiPoly:
    return MultiPoly(p.nvars, {e: (-c if e[var] % 2 else c) for e, c in p.items()})


def generic(rng, d, n):
    """``t^d + f1 t^(d-1) + ... + fd`` with concrete forms ``fk``; also ``fk`` moved to (t2, x)."""
    t = MultiPoly.var(n + 1, 0)
    F, fs = t**d, []
    for k in range(1, d + 1):
        fk = random_xform(rng, k, n, n + 1, 1)
        fs.append(fk.drop_var(0).insert_var(0))
        F = F + fk * t ** (d - k)
    return F, fs


def test_criterion_01_hermite_golden(capsys):
    with criterion(capsys, 1, "Hermite form of the example cubic equals the 11-term golden"):
        golden = parse_poly(HERMITE_GOLDEN, HERMITE_VARS)
        assert len(golden) == 11
        assert hermite_form(example_cubic(), 0) == golden


def test_criterion_02_certificate_replay(capsys):
    with criterion(capsys, 2, "known SOS replays exactly and sos_decompose finds a Gram"):
        form = hermite_form(example_cubic(), 0)
        squares = [(c, parse_poly(p, HERMITE_VARS)) for c, p in KNOWN_SQUARES]
        assert replay_gram(form, squares)
        cert = sos_decompose(form, hermite_basis(2, 3))
        assert cert.residual <= 1e-6
        assert cert.min_eigenvalue >= -1e-7


def test_criterion_03_quadratic_resultant(capsys):
    with criterion(capsys, 3, "quadratic resultant identity on 20 random pairs"):
        rng = random.Random(303)
        for _ in range(20):
            n = rng.randint(1, 3)
            F, (f1, f2) = generic(rng, 2, n)
            t2 = MultiPoly.var(n + 1, 0)
            full = full_resultant(complex_split(F))
            assert full - t2 * t2 * (f2.scale(4) - f1 * f1 - (t2 * t2).scale(4)) == MultiPoly.zero(n + 1)


def test_criterion_04_cubic_resultant(capsys):
    with criterion(capsys, 4, "cubic resultant factorization on 20 random triples"):
        rng = random.Random(404)
        for _ in range(20):
            n = rng.randint(1, 2)
            F, (f1, f2, f3) = generic(rng, 3, n)
            t2 = MultiPoly.var(n + 1, 0)
            disc = (
                (f1 * f2 * f3).scale(18) - (f2**3).scale(4) + f1 * f1 * f2 * f2
                - (f1**3 * f3).scale(4) - (f3 * f3).scale(27)
            )
            g = f1 * f1 - f2.scale(3)
            inner = disc + (g * g).scale(4) * t2**2 + g.scale(32) * t2**4 + (t2**6).scale(64)
            assert full_resultant(complex_split(F)) == -(t2**3) * inner


def test_criterion_05_quartic_golden(capsys):
    with criterion(capsys, 5, "quartic R_F equals the golden product up to sign"):
        golden = parse_poly(QUARTIC_GOLDEN, ["t2", "x1", "x2"])
        assert resultant_factor(fermat_quartic()).R_F in (golden, -golden)


def test_criterion_06_factorization_invariants(capsys):
    with criterion(capsys, 6, "factorization invariants on 100 random forms (d <= 5, n <= 3)"):
        rng = random.Random(606)
        for _ in range(100):
            d, n = rng.randint(1, 5), rng.randint(1, 3)
            fac = resultant_factor(random_form(rng, d, n))
            t2 = MultiPoly.var(fac.R_F.nvars, 0)
            assert fac.full == fac.R_F * t2**fac.p
            assert fac.p >= d and (fac.p - d) % 2 == 0
            assert fac.R_F.lowest_degree_in(0) == 0
            assert flip(fac.R_F, 0) == fac.R_F
            assert flip(fac.full, 0) == fac.full.scale((-1) ** d)


def test_criterion_07_nuij_identities(capsys):
    with criterion(capsys, 7, "path endpoints, discriminant at s = 1 and positivity at s = 0"):
        rng = random.Random(707)
        starts = {}
        for _ in range(50):
            d, n = rng.randint(1, 4), rng.randint(1, 3)
            F = random_form(rng, d, n)
            path = nuij_path(F)
            assert path.at(1) == F
            starts.setdefault((d, n), set()).add(path.at(0))
        for key, ends in starts.items():
            assert len(ends) == 1, key
        for d, n in [(2, 1), (3, 2), (4, 2), (3, 3), (4, 1)]:
            F = random_form(rng, d, n)
            dn = npath_discriminant(F)
            assert dn.subs({0: 1}).drop_var(0) == discriminant(univariate_view(F, 0))
            at_zero = dn.subs({0: 0})
            for _ in range(100):
                a = [Fraction(rng.randint(-30, 30), rng.randint(1, 9)) for _ in range(n)]
                if not any(a):
                    a[0] = Fraction(1)
                assert at_zero.evaluate([0] + a) > 0


def test_criterion_08_delta_n_golden(capsys):
    with criterion(capsys, 8, "N-path discriminant of the example cubic equals the golden"):
        dn = npath_discriminant(example_cubic(), repeats=4)
        assert dn == parse_poly(DELTA_N_GOLDEN, ["s", "x1", "x2"])
        spots = {
            (6, 6, 0): Fraction(29469, 4),
            (0, 0, 6): 5184,
            (0, 6, 0): 5184,
            (6, 0, 6): Fraction(12169, 2),
            (1, 6, 0): -31104,
            (0, 4, 2): 20736,
            (6, 2, 4): Fraction(392497, 16),
            (3, 1, 5): 36,
        }
        for mono, coeff in spots.items():
            assert dn.coeff(mono) == coeff


@pytest.fixture(scope="module")
def corpus_reports():
    """Every corpus entry under every method, with the wall time spent; criterion 9 is charged for it."""
    start = time.perf_counter()
    out = []
    for ent in corpus_mod.builtin_corpus(include_random=True):
        text = format_poly(ent.poly, ent.names)
        reports = {}
        for m in METHODS:
            _, report = run(RunConfig(text, list(ent.names), method=m))
            reports[m] = report
        out.append((ent, text, reports))
    return out, time.perf_counter() - start


def test_criterion_09_verdict_corpus(capsys, corpus_reports):
    entries, spent = corpus_reports
    with criterion(capsys, 9, "verdict corpus: ground truth, schema and cross-method agreement", spent):
        by_name = {}
        for ent, _, reports in entries:
            for report in reports.values():
                jsonschema.validate(report, SCHEMA)
            verdicts = {m: r["verdict"] for m, r in reports.items()}
            by_name[ent.name] = verdicts
            assert all(corpus_mod.consistent(ent.expect, v) for v in verdicts.values()), (ent.name, verdicts)
            assert len({v for v in verdicts.values() if v != "unknown"}) <= 1, (ent.name, verdicts)
        for name in ("weierstrass-c=2", "weierstrass-c=1/2"):
            assert "hyperbolic" in by_name[name].values(), by_name[name]
        assert "not_hyperbolic" not in by_name["weierstrass-c=1"].values()
        assert set(by_name["weierstrass-c=-1"].values()) == {"not_hyperbolic"}
        assert set(by_name["fermat-quartic"].values()) == {"not_hyperbolic"}
        for n in range(1, 5):
            assert set(by_name[f"lorentz-n={n}"].values()) == {"hyperbolic"}
        linprods = [v for k, v in by_name.items() if k.startswith("linprod")]
        assert len(linprods) == 20
        assert all("not_hyperbolic" not in v.values() for v in linprods)


def test_criterion_10_rank_signature_oracle(capsys):
    with criterion(capsys, 10, "rank and signature against the gcd/Sturm oracle on 200 univariates"):
        rng = random.Random(1010)
        for _ in range(200):
            f = oracle_case(rng)
            H = hermite_matrix(uni(f).reassemble(), 0)
            assert rank_signature(H, ()) == (oracles.distinct_roots(f), oracles.distinct_real_roots(f))


def test_criterion_11_sampler_soundness(capsys, corpus_reports):
    with criterion(capsys, 11, "every refutation carries a confirmed witness; runs are deterministic"):
        entries, _ = corpus_reports
        refuted = 0
        for _, _, reports in entries:
            for report in reports.values():
                if report["verdict"] == "not_hyperbolic":
                    refuted += 1
                    assert report["witness"]["confirmed"] is True
        assert refuted >= 6
        for ent, text, reports in entries:
            if ent.name not in ("weierstrass-c=-1", "fermat-quartic", "example-cubic", "lorentz-n=2"):
                continue
            for m in METHODS:
                _, again = run(RunConfig(text, list(ent.names), method=m))
                first = reports[m]
                assert again["verdict"] == first["verdict"]
                assert again.get("witness") == first.get("witness")
                assert again.get("certificate") == first.get("certificate")
