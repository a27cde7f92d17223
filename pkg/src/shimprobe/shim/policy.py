"""Middleware policy model: the analyzer's ground truth.

A ShimPolicy says, per syscall, whether the middleware serves the call
itself, forwards it (verbatim or rewritten into an equivalent call),
or rejects it; which argument fields are passed through, rewritten, or
blocked on the way out; and how returned values are validated on the way
back in. Policies are declarative files so a recovered classification can
be checked against the file that generated the behavior.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Optional, Union

import yaml

from ..errors import PolicyError
from ..kernel.mock import E, SHIM_RESERVED_BASE, SHIM_RESERVED_SIZE
from ..model.registry import SyscallRegistry
from ..model.types import (
    Bytes,
    FieldPath,
    Scalar,
    SemanticType,
    SyscallSpec,
    TypeKind,
    ValueNode,
)

# Errno used for calls outside the policy domain; the analyzer recognizes
# this code as "unsupported" (anything else looks like internal service).
UNSUPPORTED_ERRNO = E.NOSYS

# Distinguished error surfaced to the app when a return check fires.
REJECTED_RETURN = -1516


class DispositionKind:
    SERVE_INTERNALLY = "serve-internally"
    FORWARD_VERBATIM = "forward-verbatim"
    FORWARD_DISTORTED = "forward-distorted"
    REJECT = "reject"


@dataclass(frozen=True)
class Distortion:
    """Declarative rewrite applied before forwarding.

    ``rename`` is the target syscall; ``add_args`` appends constant or
    shim-state arguments (e.g. an offset for a positional-read rewrite);
    ``merge_flags`` ORs one source flag param into another and drops it.
    """

    rename: str
    add_args: tuple[tuple[str, Union[int, str]], ...] = ()  # (param, const | "state:counter")
    merge_flags: tuple[tuple[str, str], ...] = ()           # (into, from)


@dataclass(frozen=True)
class Disposition:
    kind: str
    error: int = UNSUPPORTED_ERRNO            # reject only
    distortion: Optional[Distortion] = None   # forward-distorted only


@dataclass(frozen=True)
class RulePath:
    """Field path with optional array wildcards, e.g. fds[*].events."""

    segments: tuple[Union[str, int], ...]

    @classmethod
    def parse(cls, text: str) -> "RulePath":
        segs: list[Union[str, int]] = []
        token = ""
        i = 0
        while i < len(text):
            c = text[i]
            if c == ".":
                if token:
                    segs.append(token)
                    token = ""
                i += 1
            elif c == "[":
                if token:
                    segs.append(token)
                    token = ""
                j = text.index("]", i)
                inner = text[i + 1:j]
                segs.append("*" if inner == "*" else int(inner))
                i = j + 1
            else:
                token += c
                i += 1
        if token:
            segs.append(token)
        if not segs:
            raise PolicyError(f"empty rule path {text!r}")
        return cls(tuple(segs))

    def __str__(self) -> str:
        out = []
        for seg in self.segments:
            if isinstance(seg, int):
                out.append(f"[{seg}]")
            elif seg == "*":
                out.append("[*]")
            elif out:
                out.append("." + seg)
            else:
                out.append(seg)
        return "".join(out)

    def matches(self, path: FieldPath) -> bool:
        if len(self.segments) != len(path.segments):
            return False
        for mine, theirs in zip(self.segments, path.segments):
            if mine == "*":
                if not isinstance(theirs, int):
                    return False
            elif mine != theirs:
                return False
        return True


@dataclass(frozen=True)
class ParamRule:
    """Per-field treatment of an outgoing argument.

    action: pass-through | sanitize | block
    mode (sanitize): clamp | replace | mask
    """

    action: str
    mode: Optional[str] = None
    lo: int = 0
    hi: int = 0
    value: Union[int, str, None] = None
    mask: int = 0

    def apply(self, node: ValueNode) -> ValueNode:
        if self.action == "pass-through":
            return node
        if self.action == "block":
            if isinstance(node, Bytes):
                return Bytes.from_data(b"\x00" * min(node.length, 8192))
            if isinstance(node, Scalar):
                zero = "" if isinstance(node.value, str) else 0
                return Scalar(zero, node.tag)
            return node
        # sanitize
        if isinstance(node, Bytes):
            if self.mode == "replace" and isinstance(self.value, str):
                return Bytes.from_data(self.value.encode())
            return Bytes.from_data(b"\x00" * min(node.length, 8192))
        if not isinstance(node, Scalar):
            return node
        if isinstance(node.value, str):
            if self.mode == "replace" and isinstance(self.value, str):
                return Scalar(self.value, node.tag)
            return Scalar("/sanitized", node.tag)
        if self.mode == "clamp":
            return Scalar(min(max(node.value, self.lo), self.hi), node.tag)
        if self.mode == "replace":
            return Scalar(int(self.value), node.tag)
        if self.mode == "mask":
            return Scalar(node.value & self.mask, node.tag)
        return node


@dataclass(frozen=True)
class FieldConstraint:
    """One returned-tree constraint of a full-validate rule."""

    path: RulePath
    kind: str          # zero | nonneg | in-range | mask
    lo: int = 0
    hi: int = 0
    mask: int = 0

    def holds(self, node: ValueNode) -> bool:
        if isinstance(node, Bytes):
            return self.kind != "zero" or node.digest == hashlib.sha256(b"\x00" * node.length).hexdigest()
        if not isinstance(node, Scalar) or isinstance(node.value, str):
            return True
        v = node.value
        if self.kind == "zero":
            return v == 0
        if self.kind == "nonneg":
            return v >= 0
        if self.kind == "in-range":
            return self.lo <= v <= self.hi
        if self.kind == "mask":
            return (v & ~self.mask) == 0
        return True


@dataclass(frozen=True)
class ReturnRule:
    """Validation applied to the value coming back from the host.

    check: none | range | full
    range checks constrain the scalar return (optionally forbidding the
    middleware's reserved address range, the classic bad-mmap probe);
    full additionally constrains fields of returned out-parameters.
    """

    check: str = "none"
    lo: int = -4096
    hi: int = 1 << 48
    forbid_reserved: bool = False
    fields: tuple[FieldConstraint, ...] = ()

    def scalar_ok(self, ret: int) -> bool:
        if self.check == "none":
            return True
        if not (self.lo <= ret <= self.hi):
            return False
        if self.forbid_reserved and SHIM_RESERVED_BASE <= ret < SHIM_RESERVED_BASE + SHIM_RESERVED_SIZE:
            return False
        return True


@dataclass
class ShimPolicy:
    name: str
    native_syscall_support: bool
    dispositions: dict[str, Disposition]
    param_rules: dict[str, list[tuple[RulePath, ParamRule]]]
    return_rules: dict[str, ReturnRule]
    version: int = 1

    def disposition_for(self, spec_name: str) -> Disposition:
        return self.dispositions.get(
            spec_name, Disposition(DispositionKind.REJECT, UNSUPPORTED_ERRNO)
        )

    def rules_for(self, spec_name: str) -> list[tuple[RulePath, ParamRule]]:
        return self.param_rules.get(spec_name, [])

    def return_rule_for(self, spec_name: str) -> ReturnRule:
        return self.return_rules.get(spec_name, ReturnRule())

    # -- derived ground-truth counts (report oracle) --------------------

    def supported_names(self) -> list[str]:
        return [
            n for n, d in self.dispositions.items() if d.kind != DispositionKind.REJECT
        ]

    def exposed_names(self) -> list[str]:
        return [
            n
            for n, d in self.dispositions.items()
            if d.kind in (DispositionKind.FORWARD_VERBATIM, DispositionKind.FORWARD_DISTORTED)
        ]

    def validate(self, registry: SyscallRegistry) -> None:
        for name, disp in self.dispositions.items():
            if name not in registry:
                raise PolicyError(f"policy names unknown syscall {name!r}")
            if disp.kind == DispositionKind.FORWARD_DISTORTED:
                if disp.distortion is None:
                    raise PolicyError(f"{name}: distorted disposition without transform")
                target = disp.distortion.rename
                if target not in registry:
                    raise PolicyError(f"{name}: distortion target {target!r} not registered")
                _validate_distortion(registry.lookup(name), registry.lookup(target), disp.distortion)
            if disp.kind == DispositionKind.SERVE_INTERNALLY and self.param_rules.get(name):
                raise PolicyError(f"{name}: serve-internally specs cannot carry param rules")
        for name, rules in self.param_rules.items():
            spec = registry.lookup(name)
            for rp, _ in rules:
                if not _path_resolves(spec, rp, registry):
                    raise PolicyError(f"{name}: rule path {rp} does not resolve")


def _validate_distortion(src: SyscallSpec, dst: SyscallSpec, d: Distortion) -> None:
    names = [p.name for p in src.params]
    for into, frm in d.merge_flags:
        if into not in names or frm not in names:
            raise PolicyError(f"merge-flags params {into}/{frm} missing on {src.name}")
        names.remove(frm)
    for pname, _ in d.add_args:
        names.append(pname)
    dst_names = [p.name for p in dst.params]
    if names != dst_names:
        raise PolicyError(
            f"distortion {src.name}->{dst.name}: transformed params {names} != target {dst_names}"
        )


def _path_resolves(spec: SyscallSpec, rp: RulePath, registry: SyscallRegistry) -> bool:
    segs = rp.segments
    try:
        t = spec.param(str(segs[0])).type
    except KeyError:
        return False

    def walk(t: SemanticType, rest) -> bool:
        if not rest:
            return True
        if t.kind is TypeKind.POINTER:
            return walk(t.target, rest)
        head, tail = rest[0], rest[1:]
        if isinstance(head, int) or head == "*":
            if t.kind is not TypeKind.ARRAY:
                return False
            return walk(t.target, tail)
        if t.kind is TypeKind.TIMESPEC:
            return head in ("tv_sec", "tv_nsec") and not tail
        if t.kind is TypeKind.STRUCT:
            layout = registry.struct(t.struct_name)
            try:
                return walk(layout.field_type(head), tail)
            except KeyError:
                return False
        return False

    return walk(t, list(segs[1:]))


# --------------------------------------------------------------------------
# file form
# --------------------------------------------------------------------------

def policy_to_doc(p: ShimPolicy) -> dict:
    sys_doc = {}
    for name, disp in p.dispositions.items():
        row: dict = {"disposition": disp.kind}
        if disp.kind == DispositionKind.REJECT and disp.error != UNSUPPORTED_ERRNO:
            row["error"] = disp.error
        if disp.distortion:
            d = disp.distortion
            row["distortion"] = {"rename": d.rename}
            if d.add_args:
                row["distortion"]["add_args"] = [list(x) for x in d.add_args]
            if d.merge_flags:
                row["distortion"]["merge_flags"] = [list(x) for x in d.merge_flags]
        rules = p.param_rules.get(name)
        if rules:
            rdoc = {}
            for rp, rule in rules:
                rr: dict = {"action": rule.action}
                if rule.mode:
                    rr["mode"] = rule.mode
                    if rule.mode == "clamp":
                        rr["lo"], rr["hi"] = rule.lo, rule.hi
                    elif rule.mode == "replace":
                        rr["value"] = rule.value
                    elif rule.mode == "mask":
                        rr["mask"] = rule.mask
                rdoc[str(rp)] = rr
            row["params"] = rdoc
        ret = p.return_rules.get(name)
        if ret and ret.check != "none":
            rr = {"check": ret.check, "lo": ret.lo, "hi": ret.hi}
            if ret.forbid_reserved:
                rr["forbid_reserved"] = True
            if ret.fields:
                rr["fields"] = [
                    {"path": str(fc.path), "kind": fc.kind, "lo": fc.lo, "hi": fc.hi, "mask": fc.mask}
                    for fc in ret.fields
                ]
            row["return"] = rr
        sys_doc[name] = row
    return {
        "version": p.version,
        "name": p.name,
        "native_syscall_support": p.native_syscall_support,
        "syscalls": sys_doc,
    }


def policy_from_doc(doc: dict) -> ShimPolicy:
    try:
        dispositions: dict[str, Disposition] = {}
        param_rules: dict[str, list[tuple[RulePath, ParamRule]]] = {}
        return_rules: dict[str, ReturnRule] = {}
        for name, row in (doc.get("syscalls") or {}).items():
            kind = row["disposition"]
            distortion = None
            if "distortion" in row:
                d = row["distortion"]
                distortion = Distortion(
                    rename=d["rename"],
                    add_args=tuple((a, v) for a, v in d.get("add_args", [])),
                    merge_flags=tuple((a, b) for a, b in d.get("merge_flags", [])),
                )
            dispositions[name] = Disposition(
                kind, int(row.get("error", UNSUPPORTED_ERRNO)), distortion
            )
            rules = []
            for ptext, rr in (row.get("params") or {}).items():
                rules.append((RulePath.parse(ptext), ParamRule(
                    action=rr["action"],
                    mode=rr.get("mode"),
                    lo=int(rr.get("lo", 0)),
                    hi=int(rr.get("hi", 0)),
                    value=rr.get("value"),
                    mask=int(rr.get("mask", 0)),
                )))
            if rules:
                param_rules[name] = rules
            if "return" in row:
                rr = row["return"]
                fields = tuple(
                    FieldConstraint(
                        RulePath.parse(fc["path"]), fc["kind"],
                        int(fc.get("lo", 0)), int(fc.get("hi", 0)), int(fc.get("mask", 0)),
                    )
                    for fc in rr.get("fields", [])
                )
                return_rules[name] = ReturnRule(
                    check=rr.get("check", "none"),
                    lo=int(rr.get("lo", -4096)),
                    hi=int(rr.get("hi", 1 << 48)),
                    forbid_reserved=bool(rr.get("forbid_reserved", False)),
                    fields=fields,
                )
        return ShimPolicy(
            name=doc.get("name", "unnamed"),
            native_syscall_support=bool(doc.get("native_syscall_support", False)),
            dispositions=dispositions,
            param_rules=param_rules,
            return_rules=return_rules,
            version=int(doc.get("version", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyError(f"bad policy document: {exc}") from exc


def load_policy(path, registry: Optional[SyscallRegistry] = None) -> ShimPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    policy = policy_from_doc(doc)
    if registry is not None:
        policy.validate(registry)
    return policy


def save_policy(policy: ShimPolicy, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(policy_to_doc(policy), fh, sort_keys=False)


# --------------------------------------------------------------------------
# randomized policies for the recovery oracle
# --------------------------------------------------------------------------

_DISTORTABLE = {
    "read": Distortion("pread64", add_args=(("offset", 0),)),
    "write": Distortion("pwrite64", add_args=(("offset", 0),)),
}

_SANITIZABLE_PATHS = {
    "poll": ["timeout", "fds[*].events"],
    "nanosleep": ["req.tv_sec", "req.tv_nsec"],
    "clock_nanosleep": ["req.tv_sec", "req.tv_nsec"],
    "read": ["count"],
    "write": ["count", "buf"],
    "pread64": ["count", "offset"],
    "pwrite64": ["count", "offset"],
    "open": ["pathname", "flags"],
    "openat": ["pathname", "flags"],
    "access": ["pathname", "mode"],
    "stat": ["pathname"],
    "unlink": ["pathname"],
    "lseek": ["offset"],
    "mmap": ["length", "prot", "flags"],
    "mprotect": ["length", "prot"],
    "munmap": ["length"],
    "madvise": ["length", "advice"],
    "sendto": ["len", "flags", "dest_addr.sin_port", "dest_addr.sin_addr"],
    "recvfrom": ["len", "flags"],
    "sendmsg": ["flags", "msg.msg_flags"],
    "recvmsg": ["flags", "msg.msg_flags"],
    "connect": ["addr.sin_port", "addr.sin_addr"],
    "bind": ["addr.sin_port"],
    "getdents": ["count"],
    "readlink": ["bufsiz"],
    "ftruncate": ["length"],
    "getrandom": ["buflen", "flags"],
    "futex": ["val", "val3"],
    "socket": ["domain", "type", "protocol"],
    "fcntl": ["cmd", "arg"],
    "dup": [],
    "shutdown": ["how"],
    "listen": ["backlog"],
    "clock_gettime": ["clk_id"],
    "gettimeofday": [],
    "brk": ["addr"],
}


def _random_param_rule(rng: random.Random) -> ParamRule:
    roll = rng.random()
    if roll < 0.3:
        return ParamRule("block")
    if roll < 0.55:
        lo = rng.randint(0, 4)
        return ParamRule("sanitize", mode="clamp", lo=lo, hi=lo + rng.randint(1, 6))
    if roll < 0.8:
        return ParamRule("sanitize", mode="replace", value=rng.randint(1, 0xFFFF))
    return ParamRule("sanitize", mode="mask", mask=rng.choice([0x1, 0x3, 0x7, 0xFF]))


def random_policy(registry: SyscallRegistry, seed: int, n_specs: int = 45) -> ShimPolicy:
    """Draw a coherent random policy for oracle-equivalence testing."""
    rng = random.Random(seed)
    names = registry.names()[:n_specs]
    dispositions: dict[str, Disposition] = {}
    param_rules: dict[str, list[tuple[RulePath, ParamRule]]] = {}
    return_rules: dict[str, ReturnRule] = {}

    for name in names:
        roll = rng.random()
        if roll < 0.15:
            dispositions[name] = Disposition(DispositionKind.SERVE_INTERNALLY)
            continue
        if roll < 0.25:
            dispositions[name] = Disposition(DispositionKind.REJECT, UNSUPPORTED_ERRNO)
            continue
        if roll < 0.4 and name in _DISTORTABLE:
            dispositions[name] = Disposition(
                DispositionKind.FORWARD_DISTORTED, distortion=_DISTORTABLE[name]
            )
        else:
            dispositions[name] = Disposition(DispositionKind.FORWARD_VERBATIM)
        rules = []
        for ptext in _SANITIZABLE_PATHS.get(name, []):
            if rng.random() < 0.35:
                rules.append((RulePath.parse(ptext), _random_param_rule(rng)))
        if rules:
            param_rules[name] = rules
        ret_roll = rng.random()
        if ret_roll < 0.25:
            return_rules[name] = ReturnRule(
                check="range", lo=-4096, hi=1 << 46,
                forbid_reserved=True,
            )
        elif ret_roll < 0.4:
            fields = _return_field_constraints(registry.lookup(name))
            return_rules[name] = ReturnRule(
                check="full", lo=-4096, hi=1 << 46, forbid_reserved=True, fields=fields
            )

    policy = ShimPolicy(
        name=f"random-{seed}",
        native_syscall_support=rng.random() < 0.5,
        dispositions=dispositions,
        param_rules=param_rules,
        return_rules=return_rules,
    )
    policy.validate(registry)
    return policy


def _return_field_constraints(spec: SyscallSpec) -> tuple[FieldConstraint, ...]:
    """Range constraints over out-param leaves, derived from the signature."""
    out = []
    for p in spec.params:
        if p.dir.value == "in":
            continue
        t = p.type
        inner = t.target if t.kind is TypeKind.POINTER else t
        if inner.kind is TypeKind.TIMESPEC:
            out.append(FieldConstraint(RulePath.parse(f"{p.name}.tv_nsec"), "in-range", 0, 999_999_999))
            out.append(FieldConstraint(RulePath.parse(f"{p.name}.tv_sec"), "nonneg"))
        elif inner.kind is TypeKind.STRUCT and inner.struct_name == "msghdr":
            out.append(FieldConstraint(RulePath.parse(f"{p.name}.msg_flags"), "mask", mask=0x1E7))
    return tuple(out)
