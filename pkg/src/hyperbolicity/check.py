"""Method dispatch: one entry point for every verdict pipeline."""

from __future__ import annotations

from .hermite_test import hermite_verdict
from .intersection_test import intersection_verdict, nullsatz_verdict
from .nuij_test import nuij_verdict
from .polyring import MultiPoly
from .verdict import Status, Verdict

METHODS = ("hermite", "intersection", "nullsatz", "nuij", "auto")
AUTO_ORDER = ("hermite", "intersection", "nuij")


def run_method(method: str, poly: MultiPoly, e=None, opts: dict | None = None) -> Verdict:
    opts = dict(opts or {})
    if method == "hermite":
        return hermite_verdict(poly, e, opts)
    if method == "intersection":
        return intersection_verdict(poly, e, opts)
    if method == "nullsatz":
        return nullsatz_verdict(poly, e, opts.get("degree_bound"), opts)
    if method == "nuij":
        return nuij_verdict(poly, e, opts)
    if method == "auto":
        return auto_verdict(poly, e, opts)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def auto_verdict(poly: MultiPoly, e=None, opts: dict | None = None) -> Verdict:
    """Hermite, then intersection, then Nuij; the first certified verdict stops the chain."""
    tried = []
    last = None
    for name in AUTO_ORDER:
        v = run_method(name, poly, e, opts)
        tried.append({"method": name, "verdict": v.status.value, "diagnostics": v.diagnostics})
        if v.certified:
            v.diagnostics = dict(v.diagnostics, auto=[t["method"] for t in tried])
            v.method = f"auto:{name}"
            return v
        last = v
    reasons = "; ".join(f"{t['method']}: unknown" for t in tried)
    return Verdict(
        Status.UNKNOWN,
        "auto",
        reason=f"no method certified a verdict ({reasons})",
        diagnostics={"auto": [t["method"] for t in tried], "runs": tried, "timings_ms": {}, "seed": last.diagnostics.get("seed")},
    )
