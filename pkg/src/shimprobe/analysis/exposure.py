"""Stage 1: which syscalls escape the middleware, and in what form.

A syscall with kernel-side evidence is exposed (verbatim or rewritten);
one that never reaches the kernel is either served inside the middleware
(returns other than the distinguished unsupported errno) or unsupported.
The exposed list is the work list for the later stages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..harness.records import CallRecord
from ..shim.policy import UNSUPPORTED_ERRNO
from .correlate import Correlation

SERVED_INTERNALLY = "served-internally"
FORWARDED_VERBATIM = "forwarded-verbatim"
FORWARDED_DISTORTED = "forwarded-distorted"
REJECTED_UNSUPPORTED = "rejected-unsupported"


@dataclass
class ExposureResult:
    spec: str
    klass: str
    target: str = ""                      # rewrite target when distorted
    counts: dict = field(default_factory=dict)
    evidence: list = field(default_factory=list)   # (u_seq, k_seq) or (u_seq,)

    @property
    def exposed(self) -> bool:
        return self.klass in (FORWARDED_VERBATIM, FORWARDED_DISTORTED)


def classify_exposure(
    u_records: list[CallRecord], correlation: Correlation
) -> dict[str, ExposureResult]:
    by_spec: dict[str, list[CallRecord]] = {}
    for u in u_records:
        by_spec.setdefault(u.name, []).append(u)

    out: dict[str, ExposureResult] = {}
    for spec, urecs in by_spec.items():
        pairs = correlation.pairs_for(spec)
        n = len(urecs)
        if pairs:
            verbatim = [p for p in pairs if not p.distorted]
            distorted = [p for p in pairs if p.distorted]
            counts = {
                "calls": n,
                "forwarded": len(verbatim),
                "distorted": len(distorted),
                "not-forwarded": n - len(pairs),
            }
            if distorted and len(distorted) >= len(verbatim):
                targets = sorted({p.k.name for p in distorted})
                res = ExposureResult(spec, FORWARDED_DISTORTED, target=targets[0], counts=counts)
                res.evidence = [(p.u.seq, p.k.seq) for p in distorted[:2]]
            else:
                res = ExposureResult(spec, FORWARDED_VERBATIM, counts=counts)
                res.evidence = [(p.u.seq, p.k.seq) for p in verbatim[:2]]
            out[spec] = res
            continue
        rets = [u.ret.value for u in urecs if u.ret.fault is None and u.ret.value is not None]
        counts = {"calls": n, "forwarded": 0, "distorted": 0, "not-forwarded": n}
        if not rets or all(r == -UNSUPPORTED_ERRNO for r in rets):
            res = ExposureResult(spec, REJECTED_UNSUPPORTED, counts=counts)
        else:
            res = ExposureResult(spec, SERVED_INTERNALLY, counts=counts)
        res.evidence = [(urecs[0].seq,)]
        out[spec] = res
    return out


def exposed_list(exposure: dict[str, ExposureResult]) -> list[str]:
    return [name for name, res in sorted(exposure.items()) if res.exposed]
