"""Command-line front end.

Exit codes: 0 hyperbolic, 1 not hyperbolic, 2 unknown, 64 usage error.
The dump subcommands (``resultant``, ``hermite``, ``nuij``) exit 0 on success.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import time
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from numbers import Integral, Real
from pathlib import Path
from typing import Sequence

import numpy as np

from . import corpus as corpus_mod
from .check import METHODS, run_method
from .hermite_test import SOUNDNESS_NOTE
from .intersection_test import resultant_factor
from .nuij_test import npath_discriminant
from .polyring import MultiPoly, PolySyntaxError, format_poly, format_rational, parse_poly
from .structmats import hermite_form, hermite_matrix
from .verdict import DEFAULT_SAMPLES, DEFAULT_SEED, Status, prepare

EXIT_CODES = {Status.HYPERBOLIC: 0, Status.NOT_HYPERBOLIC: 1, Status.UNKNOWN: 2}
EXIT_USAGE = 64
SCHEMA_PATH = Path(__file__).with_name("report.schema.json")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    poly_text: str
    vars: list[str]
    point: list[Fraction] | None = None
    method: str = "auto"
    samples: int = DEFAULT_SAMPLES
    sos_degree: int | None = None
    degree_bound: int | None = None
    tol: float | None = None
    seed: int = DEFAULT_SEED
    json: bool = False
    repeats: int | None = None

    def __post_init__(self):
        if self.point is not None and len(self.point) != len(self.vars):
            raise UsageError(f"--point has {len(self.point)} coordinates but there are {len(self.vars)} variables")
        if self.samples < 0:
            raise UsageError("--samples must be nonnegative")
        if self.tol is not None and not self.tol > 0:
            raise UsageError("--tol must be positive")
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}")
        for name in ("sos_degree", "degree_bound", "repeats"):
            v = getattr(self, name)
            if v is not None and v < (1 if name == "repeats" else 0):
                raise UsageError(f"--{name.replace('_', '-')} out of range")

    def opts(self) -> dict:
        out = {"samples": self.samples, "seed": self.seed}
        if self.sos_degree is not None:
            out["sos_degree"] = self.sos_degree
        if self.degree_bound is not None:
            out["degree_bound"] = self.degree_bound
        if self.tol is not None:
            out["tols"] = {"id_tol": self.tol}
        if self.repeats is not None:
            out["nuij_repeats"] = self.repeats
        return out

    def parameters(self) -> dict:
        return {
            "method": self.method,
            "samples": self.samples,
            "sos_degree": self.sos_degree,
            "degree_bound": self.degree_bound,
            "tol": self.tol,
            "seed": self.seed,
            "point": [format_rational(c) for c in self.resolved_point()],
        }

    def resolved_point(self) -> list[Fraction]:
        return list(self.point) if self.point is not None else [Fraction(int(i == 0)) for i in range(len(self.vars))]

    def parse(self) -> MultiPoly:
        try:
            return parse_poly(self.poly_text, self.vars)
        except PolySyntaxError as exc:
            raise UsageError(f"cannot parse polynomial: {exc}") from exc
        except ValueError as exc:
            raise UsageError(str(exc)) from exc


# serialization


def _plain(obj):
    """JSON-ready structure with exact rationals as "p/q" strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, Fraction):
        return format_rational(obj)
    if isinstance(obj, Integral):
        return int(obj)
    if isinstance(obj, Real):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _dump(obj, indent: int, level: int) -> str:
    pad, inner = " " * (indent * level), " " * (indent * (level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{inner}{_string(k)}: {_dump(v, indent, level + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_dump(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _dump(v, indent, level + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    return _string(obj)


def _string(s: str) -> str:
    return json.dumps(s)


def to_json_text(obj, indent: int = 2) -> str:
    """JSON text with every float at 17 significant digits."""
    return _dump(_plain(obj), indent, 0)


# reports


def _rename(names: Sequence[str] | None, user_vars: Sequence[str], at_e0: bool) -> list[str] | None:
    """At the default point the normalized coordinates are the input ones."""
    if names is None or not at_e0:
        return names
    table = {f"x{i}": v for i, v in enumerate(user_vars)}
    return [table.get(n, n) for n in names]


def run(config: RunConfig) -> tuple[int, dict]:
    """Dispatch the chosen method; return the exit code and the JSON report."""
    poly = config.parse()
    point = config.resolved_point()
    t0 = time.perf_counter()
    try:
        v = run_method(config.method, poly, point, config.opts())
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    total = round(1000 * (time.perf_counter() - t0), 3)
    at_e0 = point == [Fraction(int(i == 0)) for i in range(len(point))]
    v.diagnostics["certificate_vars"] = _rename(v.diagnostics.get("certificate_vars"), config.vars, at_e0)
    body = v.to_json()
    diag = body.pop("diagnostics")
    timings = dict(diag.pop("timings_ms", {}) or {})
    timings["total"] = total
    diagnostics = {"timings_ms": timings, "seed": config.seed, "parameters": config.parameters(), **diag}
    report = {
        "input": {
            "poly": format_poly(poly, config.vars),
            "vars": list(config.vars),
            "point": [format_rational(c) for c in point],
        },
        **body,
        "diagnostics": diagnostics,
    }
    return EXIT_CODES[v.status], _plain(report)


def describe(report: dict) -> str:
    lines = [f"verdict: {report['verdict']}", f"method: {report['method']}"]
    cert = report.get("certificate")
    if cert is not None:
        blocks = cert.get("blocks", [cert])
        sizes = "+".join(str(len(b["basis"])) for b in blocks)
        kind = "exact" if cert.get("exact") else "validated"
        lines.append(
            f"certificate: Gram blocks {sizes}, min eigenvalue {cert['min_eigenvalue']:.3g}, "
            f"residual {cert['residual']:.3g}, {kind}"
        )
    w = report.get("witness")
    if w is not None:
        lines.append(f"witness direction: ({', '.join(w['direction_rational'])})")
        lines.append(f"non-real root: {w['root']['re']:.6g} {w['root']['im']:+.6g}i (confirmed: {w['confirmed']})")
    if report.get("reason"):
        lines.append(f"reason: {report['reason']}")
    lines.append(f"seed: {report['diagnostics']['seed']}")
    lines.append(f"time: {report['diagnostics']['timings_ms']['total']} ms")
    return "\n".join(lines)


# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _rationals(text: str) -> list[Fraction]:
    try:
        return [Fraction(part.strip()) for part in text.split(",")]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad rational list {text!r}") from exc


def _infer_vars(text: str) -> list[str]:
    names = set(re.findall(r"[A-Za-z_][A-Za-z_0-9]*", text))
    idx = [int(m.group(1)) for m in map(re.compile(r"x(\d+)$").match, names) if m]
    if len(idx) != len(names) or not idx:
        raise UsageError("cannot infer the variables; pass --vars")
    return [f"x{i}" for i in range(max(idx) + 1)]


def _input_args(p: argparse.ArgumentParser, point: bool = True):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--poly", help="polynomial text, e.g. 'x0^2-x1^2'")
    src.add_argument("--poly-file", help="file holding the polynomial text")
    p.add_argument("--vars", help="comma-separated variable names (default x0..xn)")
    if point:
        p.add_argument("--point", help="comma-separated rationals (default 1,0,...,0)")
    p.add_argument("--json", action="store_true", help="emit a JSON report")


def _poly_text(args) -> str:
    if args.poly is not None:
        return args.poly
    try:
        return Path(args.poly_file).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.poly_file}: {exc}") from exc


def _config(args) -> RunConfig:
    text = _poly_text(args)
    names = [v.strip() for v in args.vars.split(",")] if args.vars else _infer_vars(text)
    return RunConfig(
        poly_text=text,
        vars=names,
        point=_rationals(args.point) if getattr(args, "point", None) else None,
        method=getattr(args, "method", "auto"),
        samples=getattr(args, "samples", DEFAULT_SAMPLES),
        sos_degree=getattr(args, "sos_degree", None),
        degree_bound=getattr(args, "degree_bound", None),
        tol=getattr(args, "tol", None),
        seed=getattr(args, "seed", DEFAULT_SEED),
        json=args.json,
        repeats=getattr(args, "repeats", None),
    )


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hyperbolicity", description="Certify or refute hyperbolicity of a real form.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="decide hyperbolicity with one method or the auto chain")
    _input_args(c)
    c.add_argument("--method", choices=METHODS, default="auto")
    c.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    c.add_argument("--sos-degree", type=int, help="largest Hermite degree increment")
    c.add_argument("--degree-bound", type=int, help="Nullstellensatz degree bound")
    c.add_argument("--tol", type=float, help="identity tolerance")
    c.add_argument("--seed", type=int, default=DEFAULT_SEED)
    c.add_argument("--repeats", type=int, help="operator repeats along the Nuij path")

    r = sub.add_parser("resultant", help="print p and R_F of Res_t1(f_re, f_im) = t2^p R_F")
    _input_args(r)
    h = sub.add_parser("hermite", help="print the Hermite matrix and its quadratic form")
    _input_args(h)
    n = sub.add_parser("nuij", help="print the discriminant along the Nuij path")
    _input_args(n)
    n.add_argument("--repeats", type=int, help="operator repeats (default: the degree)")

    k = sub.add_parser("corpus", help="run the built-in corpus and print a summary table")
    k.add_argument("--methods", default="hermite,intersection,nuij")
    k.add_argument("--no-random", action="store_true", help="skip the random products of linear forms")
    k.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    k.add_argument("--seed", type=int, default=DEFAULT_SEED)
    k.add_argument("--json", action="store_true")
    return p


def _dump_names(config: RunConfig) -> tuple[MultiPoly, list[str]]:
    """Normalized form and display names of its x coordinates."""
    poly = config.parse()
    point = config.resolved_point()
    try:
        G = prepare(poly, point)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    at_e0 = point == [Fraction(int(i == 0)) for i in range(len(point))]
    xs = list(config.vars[1:]) if at_e0 else [f"y{i}" for i in range(1, len(config.vars))]
    return G, xs


def cmd_resultant(config: RunConfig) -> tuple[dict, str]:
    G, xs = _dump_names(config)
    fac = resultant_factor(G)
    names = ["t2"] + xs
    out = {"p": fac.p, "R_F": format_poly(fac.R_F, names), "vars": names}
    return out, f"p = {fac.p}\nR_F = {out['R_F']}"


def cmd_hermite(config: RunConfig) -> tuple[dict, str]:
    G, xs = _dump_names(config)
    d = G.homogeneity()
    H = hermite_matrix(G, 0)
    rows = [[format_poly(e, xs) for e in row] for row in H.rows()]
    us = [f"u{j}" for j in range(1, d + 1)]
    form = hermite_form(G, 0)
    out = {"matrix": rows, "form": format_poly(form, xs + us), "vars": xs + us, "note": SOUNDNESS_NOTE}
    width = max(len(x) for row in rows for x in row)
    text = "H =\n" + "\n".join("  [" + ", ".join(x.rjust(width) for x in row) + "]" for row in rows)
    return out, text + f"\nHermite form = {out['form']}"


def cmd_nuij(config: RunConfig) -> tuple[dict, str]:
    G, xs = _dump_names(config)
    if G.homogeneity() < 2 or G.nvars < 2:
        raise UsageError("the Nuij discriminant needs degree >= 2 and at least two variables")
    dn = npath_discriminant(G, repeats=config.repeats)
    names = ["s"] + xs
    out = {"repeats": config.repeats or G.homogeneity(), "delta_n": format_poly(dn, names), "vars": names}
    return out, f"Delta_N = {out['delta_n']}"


def cmd_corpus(args) -> int:
    methods = [m.strip() for m in args.methods.split(",")]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    entries = corpus_mod.builtin_corpus(include_random=not args.no_random)
    rows, reports, failures = [], [], 0
    for ent in entries:
        text = format_poly(ent.poly, ent.names)
        statuses = []
        for m in methods:
            cfg = RunConfig(text, list(ent.names), method=m, samples=args.samples, seed=args.seed)
            _, report = run(cfg)
            report["corpus_entry"] = ent.name
            reports.append(report)
            statuses.append(report["verdict"])
        ok = all(corpus_mod.consistent(ent.expect, s) for s in statuses)
        certified = {s for s in statuses if s != "unknown"}
        ok = ok and len(certified) <= 1
        failures += not ok
        rows.append((ent.name, ent.expect, *statuses, "ok" if ok else "REGRESSION"))
    if args.json:
        print(to_json_text({"methods": methods, "reports": reports, "failures": failures}))
    else:
        header = ("form", "expected", *methods, "status")
        widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
        for r in [header] + rows:
            print("  ".join(str(x).ljust(w) for x, w in zip(r, widths)))
        print(f"{len(rows) - failures}/{len(rows)} consistent")
    return 1 if failures else 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "corpus":
            return cmd_corpus(args)
        config = _config(args)
        if args.command == "check":
            code, report = run(config)
            print(to_json_text(report) if config.json else describe(report))
            return code
        dump = {"resultant": cmd_resultant, "hermite": cmd_hermite, "nuij": cmd_nuij}[args.command]
        out, text = dump(config)
        if config.json:
            out = {"input": {"poly": format_poly(config.parse(), config.vars), "vars": config.vars}, **out}
        print(to_json_text(out) if config.json else text)
        return 0
    except UsageError as exc:
        print(f"hyperbolicity: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
