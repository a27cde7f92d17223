"""Kernel-side interceptor around the mock syscall service.

Observes every call the shim forwards (exactly once, by construction),
logs the kernel-side record with the same schema as the harness side, and
applies any installed mutation rules. Every mutated call logs both the
pristine and mutated values.
"""

from __future__ import annotations

from typing import Optional

from ..errors import MemoryAccessError
from ..harness.records import CallRecord, LogWriter, RetValue
from ..kernel.mock import MockKernel
from ..model.encode import encode_value_tree, flatten, struct_size
from ..model.memory import MemoryRW
from ..model.registry import SyscallRegistry
from ..model.types import Scalar, SemanticType, SyscallSpec, TypeKind
from ..shim.policy import RulePath
from .mutation import MutationRule, SKIP


class MockInterceptor:
    def __init__(
        self,
        kernel: MockKernel,
        registry: SyscallRegistry,
        session: str,
        writer: Optional[LogWriter] = None,
    ):
        self.kernel = kernel
        self.registry = registry
        self.session = session
        self.writer = writer
        self._rules: list[MutationRule] = []
        self._seq = 0

    # -- session wiring ---------------------------------------------------

    def install_mutation(self, rule: MutationRule) -> None:
        rule.validate(self.registry)
        self._rules.append(rule)

    def clear_mutations(self) -> None:
        self._rules.clear()

    def set_writer(self, writer: Optional[LogWriter]) -> None:
        self.writer = writer

    # -- gateway interface (called by the shim) ----------------------------

    def serve(self, spec: SyscallSpec, raw_args: list[int], mem: MemoryRW) -> int:
        args_tree = encode_value_tree(spec, raw_args, mem, self.registry)
        rule = self._match(spec, args_tree)

        if rule is not None and rule.serve == SKIP:
            pristine = RetValue(None)
            self.kernel.clock.advance(max(1, self.kernel.skip_ns))
            ret = rule.return_override if rule.return_override is not None else 0
        else:
            res = self.kernel.serve(spec, raw_args, mem)
            ret = res.value
            pristine = RetValue(res.value)
            if rule is not None:
                pristine.out = encode_value_tree(spec, raw_args, mem, self.registry)

        mutated = None
        if rule is not None:
            if rule.return_override is not None:
                ret = rule.return_override
            unwritable = self._apply_out_overrides(spec, raw_args, mem, rule)
            mutated = RetValue(ret, out=encode_value_tree(spec, raw_args, mem, self.registry))
            if unwritable and self.writer:
                self.writer.write_meta("unwritable-override", name=spec.name, paths=unwritable)

        self._seq += 1
        if self.writer is not None:
            self.writer.write_record(CallRecord(
                side="K",
                session=self.session,
                seq=self._seq,
                name=spec.name,
                args=args_tree,
                ret=RetValue(ret),
                time_ns=self.kernel.clock.now_ns,
                pristine_ret=pristine,
                mutated_ret=mutated,
            ))
        return ret

    # -- internals ----------------------------------------------------------

    def _match(self, spec: SyscallSpec, args_tree) -> Optional[MutationRule]:
        candidates = [r for r in self._rules if r.spec_name == spec.name]
        if not candidates:
            return None
        flat = {str(p): (n.value if isinstance(n, Scalar) else None) for p, n in flatten(args_tree)}
        for rule in candidates:
            if rule.matches(flat):
                return rule
        return None

    def _apply_out_overrides(
        self, spec: SyscallSpec, raw_args: list[int], mem: MemoryRW, rule: MutationRule
    ) -> list[str]:
        unwritable = []
        for ptext, value in rule.out_overrides:
            loc = resolve_scalar_address(spec, raw_args, RulePath.parse(ptext), mem, self.registry)
            if loc is None:
                unwritable.append(ptext)
                continue
            addr, size, signed = loc
            try:
                v = int(value) & ((1 << (size * 8)) - 1)
                mem.write(addr, v.to_bytes(size, "little"))
            except MemoryAccessError:
                unwritable.append(ptext)
        return unwritable


def resolve_scalar_address(
    spec: SyscallSpec,
    raw_args: list[int],
    rp: RulePath,
    mem: MemoryRW,
    registry: SyscallRegistry,
) -> Optional[tuple[int, int, bool]]:
    """Walk a concrete rule path to the address of its scalar leaf.

    Returns (address, byte size, signed) or None when the path crosses a
    null/unreadable pointer. Wildcard segments resolve to index 0.
    """
    from ..model.encode import _field_size

    try:
        pidx = [p.name for p in spec.params].index(str(rp.segments[0]))
    except ValueError:
        return None
    t = spec.params[pidx].type
    addr = raw_args[pidx]
    segs = list(rp.segments[1:])

    def deref(t: SemanticType, addr: int) -> tuple[SemanticType, int]:
        while t.kind is TypeKind.POINTER:
            t = t.target
        return t, addr

    t, addr = deref(t, addr)
    if addr == 0:
        return None
    while segs:
        head = segs.pop(0)
        if isinstance(head, int) or head == "*":
            if t.kind is not TypeKind.ARRAY:
                return None
            idx = 0 if head == "*" else head
            addr += idx * _field_size(t.target, registry)
            t, addr = deref(t.target, addr)
            continue
        if t.kind is TypeKind.TIMESPEC:
            if head == "tv_sec":
                return (addr, 8, True) if not segs else None
            if head == "tv_nsec":
                return (addr + 8, 8, True) if not segs else None
            return None
        if t.kind is not TypeKind.STRUCT:
            return None
        layout = registry.struct(t.struct_name)
        off = 0
        found = None
        for fname, ftype in layout.fields:
            if fname == head:
                found = ftype
                break
            off += _field_size(ftype, registry)
        if found is None:
            return None
        addr += off
        if found.kind is TypeKind.POINTER:
            try:
                word = int.from_bytes(mem.read(addr, 8), "little")
            except MemoryAccessError:
                return None
            if word == 0:
                return None
            t, addr = deref(found.target, word)
        else:
            t = found
    if t.kind in (TypeKind.INT, TypeKind.ENUM, TypeKind.FLAGS, TypeKind.FD):
        return (addr, t.byte_size, t.signed)
    if t.kind is TypeKind.OPAQUE:
        return (addr, 8, False)
    return None
