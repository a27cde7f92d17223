"""Return-value mutation rules for the active (third-stage) campaign.

A rule matches forwarded calls of one syscall and either skips service
entirely (returning a crafted value at dispatch-only cost, the fast covert
channel) or serves the call and then overrides the scalar return and/or
fields of returned out-parameters. Both the pristine and the mutated
values are logged kernel-side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import yaml

from ..errors import PolicyError
from ..kernel.mock import SHIM_RESERVED_BASE
from ..model.registry import SyscallRegistry
from ..model.types import ArgDir, SemanticType, SyscallSpec, TypeKind
from ..shim.policy import RulePath, _path_resolves

# Scalar return crafted to violate any plausible range check: far above a
# sane address ceiling and inside the middleware's reserved range.
CRAFTED_SCALAR = SHIM_RESERVED_BASE + 0x1000

SKIP = "skip-service"
SERVE = "serve-then-override"


@dataclass(frozen=True)
class MutationRule:
    spec_name: str
    serve: str = SERVE
    return_override: Optional[int] = None
    out_overrides: tuple[tuple[str, Union[int, str]], ...] = ()
    trigger: tuple[tuple[str, int], ...] = ()   # (path, value) equality conjunction

    def matches(self, flat: dict[str, object]) -> bool:
        for ptext, want in self.trigger:
            if flat.get(ptext) != want:
                return False
        return True

    def validate(self, registry: SyscallRegistry) -> None:
        if self.spec_name not in registry:
            raise PolicyError(f"mutation rule names unknown syscall {self.spec_name!r}")
        spec = registry.lookup(self.spec_name)
        out_params = {p.name for p in spec.params if p.dir is not ArgDir.IN}
        for ptext, _ in self.out_overrides:
            rp = RulePath.parse(ptext)
            if str(rp.segments[0]) not in out_params:
                raise PolicyError(
                    f"{self.spec_name}: out override {ptext} does not target an out-parameter"
                )
            if not _path_resolves(spec, rp, registry):
                raise PolicyError(f"{self.spec_name}: out override path {ptext} does not resolve")


def rules_to_doc(rules: list[MutationRule]) -> dict:
    return {
        "version": 1,
        "rules": [
            {
                "syscall": r.spec_name,
                "serve": r.serve,
                **({"return": r.return_override} if r.return_override is not None else {}),
                **({"out": {p: v for p, v in r.out_overrides}} if r.out_overrides else {}),
                **({"trigger": {p: v for p, v in r.trigger}} if r.trigger else {}),
            }
            for r in rules
        ],
    }


def rules_from_doc(doc: dict) -> list[MutationRule]:
    out = []
    for row in doc.get("rules", []):
        out.append(MutationRule(
            spec_name=row["syscall"],
            serve=row.get("serve", SERVE),
            return_override=row.get("return"),
            out_overrides=tuple(sorted((row.get("out") or {}).items())),
            trigger=tuple(sorted((row.get("trigger") or {}).items())),
        ))
    return out


def load_mutation_rules(path, registry: Optional[SyscallRegistry] = None) -> list[MutationRule]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    rules = rules_from_doc(doc)
    if registry is not None:
        for r in rules:
            r.validate(registry)
    return rules


def save_mutation_rules(rules: list[MutationRule], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(rules_to_doc(rules), fh, sort_keys=False)


# --------------------------------------------------------------------------
# default third-stage rule synthesis
# --------------------------------------------------------------------------

SKIP_SERVICE_SPECS = ("nanosleep", "clock_nanosleep", "futex")


def default_stage3_rules(registry: SyscallRegistry, exposed: list[str]) -> list[MutationRule]:
    """One scalar-forging rule and one out-parameter-forging rule per
    exposed syscall, plus skip-service on the sleep/wait calls (the fast
    channels: the kernel completes them instantly)."""
    rules: list[MutationRule] = []
    for name in exposed:
        spec = registry.lookup(name)
        skip = name in SKIP_SERVICE_SPECS
        rules.append(MutationRule(
            spec_name=name,
            serve=SKIP if skip else SERVE,
            return_override=0 if skip else CRAFTED_SCALAR,
            out_overrides=tuple(crafted_out_overrides(spec, registry)),
        ))
    return rules


def crafted_out_overrides(spec: SyscallSpec, registry: SyscallRegistry) -> list[tuple[str, int]]:
    """Pick out-parameter leaves and values that violate sane contracts."""
    out: list[tuple[str, int]] = []
    for p in spec.params:
        if p.dir is ArgDir.IN:
            continue
        inner = p.type.target if p.type.kind is TypeKind.POINTER else p.type
        if inner.kind is TypeKind.TIMESPEC:
            out.append((f"{p.name}.tv_sec", -5))
            out.append((f"{p.name}.tv_nsec", 7_777_777_777))
        elif inner.kind is TypeKind.STRUCT:
            layout = registry.struct(inner.struct_name)
            for fname, ftype in layout.fields:
                if ftype.kind in (TypeKind.INT, TypeKind.FLAGS, TypeKind.ENUM):
                    crafted = 0xBAD & ((1 << ftype.width) - 1)
                    out.append((f"{p.name}.{fname}", crafted))
                    break
    return out
