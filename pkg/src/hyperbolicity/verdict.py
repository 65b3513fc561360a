"""Verdict type and the certify-vs-falsify orchestration shared by all methods."""

from __future__ import annotations

import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .polyring import MultiPoly, normalize_at_point

DEFAULT_SAMPLES = 2000
DEFAULT_SEED = 42


class Status(str, Enum):
    HYPERBOLIC = "hyperbolic"
    NOT_HYPERBOLIC = "not_hyperbolic"
    UNKNOWN = "unknown"


@dataclass
class Verdict:
    status: Status
    method: str
    certificate: Any = None
    witness: Any = None
    reason: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status is Status.HYPERBOLIC and self.certificate is None:
            raise ValueError("a Hyperbolic verdict needs a certificate")
        if self.status is Status.NOT_HYPERBOLIC:
            if self.witness is None or not self.witness.exact_confirmation:
                raise ValueError("a NotHyperbolic verdict needs a confirmed witness")
        if self.status is Status.UNKNOWN and not self.reason:
            raise ValueError("an Unknown verdict needs a reason")

    @property
    def certified(self) -> bool:
        return self.status is not Status.UNKNOWN

    def to_json(self) -> dict:
        out: dict = {"method": self.method, "verdict": self.status.value}
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_json(self.diagnostics.get("certificate_vars"))
        if self.witness is not None:
            out["witness"] = self.witness.to_json()
        if self.reason:
            out["reason"] = self.reason
        out["diagnostics"] = self.diagnostics
        return out


def x_names(n: int) -> list[str]:
    """Names of the normalized coordinates ``x1..xn`` (``x0`` runs along the direction)."""
    return [f"x{i}" for i in range(1, n + 1)]


def prepare(poly: MultiPoly, e=None) -> MultiPoly:
    """Validate the input and move the direction to (1, 0, ..., 0)."""
    if poly.is_zero():
        raise ValueError("the zero polynomial is not admissible")
    d = poly.homogeneity()
    if d is None:
        raise ValueError("polynomial is not homogeneous")
    if d < 1:
        raise ValueError("need a form of positive degree")
    if e is None:
        e = (1,) + (0,) * (poly.nvars - 1)
    return normalize_at_point(poly, e)


class Cancelled(Exception):
    """Raised inside a job when its stop event is set."""


def combine(
    method: str,
    G: MultiPoly,
    certify_job: Callable[..., tuple[Any, dict]],
    opts: dict,
    diagnostics: dict,
    unknown_reason: str,
    extra_directions: list | None = None,
) -> Verdict:
    """Run certification and witness search side by side.

    A confirmed witness is exact and wins; the certification thread is told
    to stop as soon as one is found.  Otherwise a certificate yields
    Hyperbolic, and no answer yields Unknown.
    """
    from . import sampler

    samples = opts.get("samples", DEFAULT_SAMPLES)
    seed = opts.get("seed", DEFAULT_SEED)
    stop = threading.Event()
    timings = diagnostics.setdefault("timings_ms", {})
    diagnostics.setdefault("seed", seed)
    diagnostics.setdefault("samples", samples)

    def run_sampler():
        t0 = time.perf_counter()
        w = sampler.find_witness(G, samples, seed, extra_directions=extra_directions)
        timings["sampler"] = round(1000 * (time.perf_counter() - t0), 3)
        return w

    def run_certify():
        t0 = time.perf_counter()
        try:
            return certify_job_with_stop(certify_job, stop)
        finally:
            timings["certify"] = round(1000 * (time.perf_counter() - t0), 3)

    with ThreadPoolExecutor(max_workers=2) as pool:
        f_wit = pool.submit(run_sampler)
        f_cert = pool.submit(run_certify)
        done, _ = wait([f_wit, f_cert], return_when=FIRST_COMPLETED)
        witness = f_wit.result()
        if witness is not None:
            stop.set()
        try:
            cert, cert_diag = f_cert.result()
        except Cancelled:
            cert, cert_diag = None, {"result": "cancelled"}

    diagnostics["certify"] = cert_diag
    diagnostics["sampler"] = "witness" if witness is not None else f"none in {samples} samples"
    if witness is not None:
        if cert is not None:
            diagnostics["conflict"] = "numeric certificate overruled by exact witness"
        return Verdict(Status.NOT_HYPERBOLIC, method, witness=witness, diagnostics=diagnostics)
    if cert is not None:
        return Verdict(Status.HYPERBOLIC, method, certificate=cert, diagnostics=diagnostics)
    return Verdict(
        Status.UNKNOWN,
        method,
        reason=f"{unknown_reason}; no witness in {samples} samples",
        diagnostics=diagnostics,
    )


def certify_job_with_stop(job, stop: threading.Event):
    from . import certify

    token = certify.STOP.set(stop)
    try:
        return job()
    except certify.SolverCancelled as exc:
        raise Cancelled() from exc
    finally:
        certify.STOP.reset(token)
