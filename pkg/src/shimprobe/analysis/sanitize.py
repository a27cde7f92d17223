"""Stage 2: field-level diffing of harness-side vs kernel-side arguments.

Each classification is evidence-backed: it cites at least one record pair
by sequence numbers. A field counts as exercised only when the generated
cases drove it to at least two distinct values; an unvaried field cannot
distinguish pass-through from constant rewriting, so it reports
not-exercised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from ..model.encode import flatten
from ..model.types import Bytes, NullPointer, Scalar, Truncated, ValueNode
from .correlate import CallPair

PASSED_THROUGH = "passed-through"
SANITIZED = "sanitized"
BLOCKED = "blocked"
NOT_EXERCISED = "not-exercised"

_ZERO_SHA = __import__("hashlib").sha256


@dataclass
class SanitizationResult:
    spec: str
    path: str
    klass: str
    codomain: str = ""                    # constant | clamped-range | masked | zeroed | modified
    evidence: list = field(default_factory=list)   # (u_seq, k_seq)
    shape_escalation: bool = False


Atom = Union[tuple, None]


def _atom(node: ValueNode) -> Atom:
    """Comparable projection of a leaf; None when not comparable."""
    if isinstance(node, Scalar):
        return ("s", node.value)
    if isinstance(node, Bytes):
        return ("b", node.length, node.digest)
    if isinstance(node, NullPointer):
        return ("0",)
    if isinstance(node, Truncated):
        return None
    return None


def _is_zeroish(atom: Atom) -> bool:
    if atom is None:
        return False
    if atom[0] == "s":
        return atom[1] == 0 or atom[1] == ""
    if atom[0] == "b":
        return atom[2] == _ZERO_SHA(b"\x00" * atom[1]).hexdigest()
    return False


def classify_value_pairs(samples: list[tuple[ValueNode, ValueNode, tuple]]) -> tuple[str, str, list]:
    """Shared classifier over (u_leaf, k_leaf, evidence) samples.

    Returns (class, codomain, evidence). The policy-recovery oracle feeds
    this same function with rule-derived kernel values, so analyzer and
    oracle agree on the observable meaning of each class.
    """
    rows = []
    for u_node, k_node, ev in samples:
        ua, ka = _atom(u_node), _atom(k_node)
        if ua is None or ka is None:
            continue
        rows.append((ua, ka, ev))
    if not rows:
        return NOT_EXERCISED, "", []
    u_distinct = {ua for ua, _, _ in rows}
    if len(u_distinct) < 2:
        return NOT_EXERCISED, "", []
    diffs = [(ua, ka, ev) for ua, ka, ev in rows if ua != ka]
    if not diffs:
        return PASSED_THROUGH, "", [rows[0][2]]
    evidence = [ev for _, _, ev in diffs[:2]]
    k_atoms = [ka for _, ka, _ in rows]
    if all(_is_zeroish(ka) for ka in k_atoms):
        return BLOCKED, "zeroed", evidence
    if len(set(k_atoms)) == 1:
        return SANITIZED, "constant", evidence
    ints = [(ua[1], ka[1]) for ua, ka, _ in rows
            if ua[0] == "s" and ka[0] == "s"
            and isinstance(ua[1], int) and isinstance(ka[1], int)]
    if len(ints) == len(rows):
        k_vals = [k for _, k in ints]
        lo, hi = min(k_vals), max(k_vals)
        if all(k == min(max(u, lo), hi) for u, k in ints):
            return SANITIZED, "clamped-range", evidence
        mask = 0
        for _, k in ints:
            mask |= k
        if all(k == (u & mask) for u, k in ints):
            return SANITIZED, "masked", evidence
    return SANITIZED, "modified", evidence


def diff_parameters(pairs_by_spec: dict[str, list[CallPair]]) -> dict[tuple[str, str], SanitizationResult]:
    """Field-local diff over correlated pairs, grouped per syscall."""
    out: dict[tuple[str, str], SanitizationResult] = {}
    for spec, pairs in sorted(pairs_by_spec.items()):
        field_samples: dict[str, list] = {}
        escalate = False
        for p in pairs:
            if p.u.args is None or p.k.args is None:
                continue
            u_flat = {str(fp): node for fp, node in flatten(p.u.args)}
            k_flat = {str(fp): node for fp, node in flatten(p.k.args)}
            u_roots = {n for n, _ in p.u.args.children}
            k_roots = {n for n, _ in p.k.args.children}
            # fields under added params belong to the rewrite, not the source
            common = set(u_flat) & set(k_flat)
            extra_roots = k_roots - u_roots
            missing = {
                path for path in set(u_flat) - set(k_flat)
                if path.split(".")[0].split("[")[0] in k_roots
            }
            if len(missing) > max(2, len(u_flat) // 2) and not extra_roots:
                escalate = True
            for path in common:
                field_samples.setdefault(path, []).append(
                    (u_flat[path], k_flat[path], (p.u.seq, p.k.seq))
                )
        for path, samples in sorted(field_samples.items()):
            klass, codomain, evidence = classify_value_pairs(samples)
            res = SanitizationResult(spec, path, klass, codomain, evidence, escalate)
            out[(spec, path)] = res
    return out
