"""Stage 3 (passive half): does the middleware validate returned values?

A syscall is "checked" only when a forged value was observed being
rejected: the harness saw the distinguished rejection error instead of
the forgery. It is "unchecked" when every forgery reached the application
intact, and "partially-checked" when some aspects (the scalar return or a
specific out-parameter field) leak while others are stopped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..model.encode import flatten
from ..model.types import Scalar
from ..shim.policy import REJECTED_RETURN
from .correlate import CallPair

CHECKED = "checked"
UNCHECKED = "unchecked"
PARTIALLY_CHECKED = "partially-checked"
NOT_EXERCISED = "not-exercised"

SCALAR_ASPECT = "ret"


@dataclass
class ReturnCheckResult:
    spec: str
    klass: str
    leaking: list[str] = field(default_factory=list)     # aspects that leak
    aspects: dict = field(default_factory=dict)          # aspect -> checked|unchecked
    evidence: list = field(default_factory=list)


def _leaf_values(tree) -> dict[str, object]:
    if tree is None:
        return {}
    out = {}
    for fp, node in flatten(tree):
        if isinstance(node, Scalar):
            out[str(fp)] = node.value
        else:
            out[str(fp)] = node
    return out


def detect_return_checks(pairs_by_spec: dict[str, list[CallPair]]) -> dict[str, ReturnCheckResult]:
    out: dict[str, ReturnCheckResult] = {}
    for spec, pairs in sorted(pairs_by_spec.items()):
        aspect_outcomes: dict[str, set] = {}
        evidence = []
        for p in pairs:
            k = p.k
            if k.mutated_ret is None:
                continue
            pristine_v = k.pristine_ret.value if k.pristine_ret else None
            mutated_v = k.mutated_ret.value
            rejected = p.u.ret.value == REJECTED_RETURN
            ev = (p.u.seq, p.k.seq)

            if mutated_v is not None and mutated_v != pristine_v:
                if rejected:
                    outcome = CHECKED
                elif p.u.ret.value == mutated_v:
                    outcome = UNCHECKED
                else:
                    outcome = CHECKED   # forgery did not reach the app
                aspect_outcomes.setdefault(SCALAR_ASPECT, set()).add(outcome)
                evidence.append(ev)

            pristine_out = _leaf_values(k.pristine_ret.out if k.pristine_ret else None)
            mutated_out = _leaf_values(k.mutated_ret.out)
            u_out = _leaf_values(p.u.ret.out)
            for path, mv in mutated_out.items():
                pv = pristine_out.get(path)
                if pv == mv:
                    continue   # this aspect was not actually forged
                if rejected:
                    outcome = CHECKED
                elif u_out.get(path) == mv:
                    outcome = UNCHECKED
                else:
                    outcome = CHECKED
                aspect_outcomes.setdefault(path, set()).add(outcome)
                evidence.append(ev)

        if not aspect_outcomes:
            out[spec] = ReturnCheckResult(spec, NOT_EXERCISED)
            continue
        aspects = {
            a: (UNCHECKED if UNCHECKED in outcomes else CHECKED)
            for a, outcomes in sorted(aspect_outcomes.items())
        }
        leaking = [a for a, o in aspects.items() if o == UNCHECKED]
        if not leaking:
            klass = CHECKED
        elif len(leaking) == len(aspects):
            klass = UNCHECKED
        else:
            klass = PARTIALLY_CHECKED
        out[spec] = ReturnCheckResult(spec, klass, leaking, aspects, evidence[:4])
    return out
