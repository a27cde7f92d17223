"""Ground-truth comparison: what the generating policy says the analyzer
should have recovered.

The oracle never diffs logs. It derives expectations from the policy
itself: dispositions give expected exposure directly; parameter rules are
applied to the logged harness-side values and pushed through the same
observable classifier the analyzer uses; return rules are evaluated
against the logged forged values with the same acceptance predicate the
engine enforces. Exact equality against the analyzer's recovery is the
acceptance bar.
"""

from __future__ import annotations

from ..model.encode import flatten
from ..model.types import FieldPath
from ..shim.engine import _return_ok
from ..shim.policy import DispositionKind, ShimPolicy
from .correlate import CallPair
from .exposure import (
    FORWARDED_DISTORTED,
    FORWARDED_VERBATIM,
    REJECTED_UNSUPPORTED,
    SERVED_INTERNALLY,
    ExposureResult,
)
from .returns import CHECKED, NOT_EXERCISED, PARTIALLY_CHECKED, SCALAR_ASPECT, UNCHECKED, ReturnCheckResult
from .sanitize import SanitizationResult, _atom, classify_value_pairs

_KIND_TO_CLASS = {
    DispositionKind.SERVE_INTERNALLY: SERVED_INTERNALLY,
    DispositionKind.FORWARD_VERBATIM: FORWARDED_VERBATIM,
    DispositionKind.FORWARD_DISTORTED: FORWARDED_DISTORTED,
    DispositionKind.REJECT: REJECTED_UNSUPPORTED,
}


def expected_exposure(policy: ShimPolicy, exercised: list[str]) -> dict[str, tuple[str, str]]:
    """spec -> (expected class, expected distortion target)."""
    out = {}
    for name in exercised:
        disp = policy.disposition_for(name)
        target = disp.distortion.rename if disp.distortion else ""
        out[name] = (_KIND_TO_CLASS[disp.kind], target)
    return out


def expected_sanitization(
    policy: ShimPolicy,
    pairs_by_spec: dict[str, list[CallPair]],
    registry,
) -> dict[tuple[str, str], tuple[str, str]]:
    """(spec, path) -> (expected class, expected codomain).

    Replays the middleware's own marshalling on the logged harness-side
    trees (sanitize, realize into scratch memory, re-encode) to derive the
    kernel-observable values the policy implies, including indirect
    effects such as a clamped length field truncating its buffer. Sample
    selection matches the analyzer's (both logged leaves comparable), and
    the shared observable classifier makes the final call.
    """
    from ..model.encode import encode_value_tree, realize_args
    from ..model.memory import VirtualAddressSpace
    from ..shim.engine import sanitize_tree

    out = {}
    for spec_name, pairs in sorted(pairs_by_spec.items()):
        rules = policy.rules_for(spec_name)
        spec = registry.lookup(spec_name)
        field_samples: dict[str, list] = {}
        for p in pairs:
            if p.u.args is None or p.k.args is None:
                continue
            sanitized = sanitize_tree(rules, p.u.args)
            scratch = VirtualAddressSpace()
            words = realize_args(spec, sanitized, scratch, registry)
            derived_tree = encode_value_tree(spec, words, scratch, registry)
            derived_flat = {str(fp): node for fp, node in flatten(derived_tree)}
            k_flat = {str(fp): node for fp, node in flatten(p.k.args)}
            for fp, u_node in flatten(p.u.args):
                path = str(fp)
                k_node = k_flat.get(path)
                if k_node is None or _atom(k_node) is None or _atom(u_node) is None:
                    continue
                derived = derived_flat.get(path)
                if derived is None or _atom(derived) is None:
                    continue
                field_samples.setdefault(path, []).append((u_node, derived, (p.u.seq, p.k.seq)))
        for path, samples in field_samples.items():
            klass, codomain, _ = classify_value_pairs(samples)
            out[(spec_name, path)] = (klass, codomain)
    return out


def expected_return_checks(
    policy: ShimPolicy, pairs_by_spec: dict[str, list[CallPair]]
) -> dict[str, ReturnCheckResult]:
    """Mirror the engine's acceptance predicate over the logged forgeries."""
    out = {}
    for spec, pairs in sorted(pairs_by_spec.items()):
        rule = policy.return_rule_for(spec)
        aspect_outcomes: dict[str, set] = {}
        for p in pairs:
            k = p.k
            if k.mutated_ret is None or k.mutated_ret.out is None:
                if k.mutated_ret is None:
                    continue
            mutated_v = k.mutated_ret.value
            pristine_v = k.pristine_ret.value if k.pristine_ret else None
            accepted = _return_ok(rule, mutated_v if mutated_v is not None else 0, k.mutated_ret.out) \
                if k.mutated_ret.out is not None else rule.scalar_ok(mutated_v or 0)
            outcome = UNCHECKED if accepted else CHECKED
            if mutated_v is not None and mutated_v != pristine_v:
                aspect_outcomes.setdefault(SCALAR_ASPECT, set()).add(outcome)
            pristine_out = _leafmap(k.pristine_ret.out if k.pristine_ret else None)
            for path, mv in _leafmap(k.mutated_ret.out).items():
                if pristine_out.get(path) != mv:
                    aspect_outcomes.setdefault(path, set()).add(outcome)
        if not aspect_outcomes:
            out[spec] = ReturnCheckResult(spec, NOT_EXERCISED)
            continue
        aspects = {
            a: (UNCHECKED if UNCHECKED in oc else CHECKED)
            for a, oc in sorted(aspect_outcomes.items())
        }
        leaking = [a for a, o in aspects.items() if o == UNCHECKED]
        if not leaking:
            klass = CHECKED
        elif len(leaking) == len(aspects):
            klass = UNCHECKED
        else:
            klass = PARTIALLY_CHECKED
        out[spec] = ReturnCheckResult(spec, klass, leaking, aspects)
    return out


def _leafmap(tree):
    from ..model.types import Scalar

    if tree is None:
        return {}
    out = {}
    for fp, node in flatten(tree):
        out[str(fp)] = node.value if isinstance(node, Scalar) else node
    return out


def oracle_mismatches(
    policy: ShimPolicy,
    exposure: dict[str, ExposureResult],
    sanitization: dict[tuple[str, str], SanitizationResult],
    return_checks: dict[str, ReturnCheckResult],
    stage2_pairs: dict[str, list[CallPair]],
    stage3_pairs: dict[str, list[CallPair]],
    registry=None,
) -> list[str]:
    """All disagreements between recovery and ground truth, as strings."""
    if registry is None:
        from ..catalog import load_default_catalog

        registry = load_default_catalog()
    problems = []

    want_exposure = expected_exposure(policy, sorted(exposure))
    for spec, res in sorted(exposure.items()):
        want_class, want_target = want_exposure[spec]
        if res.klass != want_class:
            problems.append(f"exposure {spec}: got {res.klass}, policy says {want_class}")
        elif want_class == FORWARDED_DISTORTED and res.target != want_target:
            problems.append(f"exposure {spec}: distortion target {res.target} != {want_target}")

    want_fields = expected_sanitization(policy, stage2_pairs, registry)
    for key, res in sorted(sanitization.items()):
        want = want_fields.get(key)
        if want is None:
            continue
        if (res.klass, res.codomain) != want:
            problems.append(
                f"sanitization {key[0]}.{key[1]}: got {res.klass}/{res.codomain}, "
                f"policy says {want[0]}/{want[1]}"
            )
    for key, want in sorted(want_fields.items()):
        if key not in sanitization:
            problems.append(f"sanitization {key[0]}.{key[1]}: missing from recovery")

    want_checks = expected_return_checks(policy, stage3_pairs)
    for spec, res in sorted(return_checks.items()):
        want = want_checks.get(spec)
        if want is None:
            continue
        if res.klass != want.klass or sorted(res.leaking) != sorted(want.leaking):
            problems.append(
                f"return-check {spec}: got {res.klass}{res.leaking}, "
                f"policy says {want.klass}{want.leaking}"
            )
    return problems
