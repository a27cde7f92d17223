"""Policy engine: the reference middleware a session targets.

The engine sits between the harness (its application) and a kernel
gateway (mock service or real OS). Forwarded calls are marshalled out of
the application's memory into a fresh region, the analogue of an
outside-call stub copying arguments across a trust boundary, so
sanitization is visible to the kernel side without mutating the
application's view. Returned out-parameters are copied back only when the
return-check rule accepts the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol

from ..model.encode import (
    encode_value_tree,
    flatten,
    realize_args,
    struct_size,
    _field_size,
)
from ..errors import MemoryAccessError
from ..model.memory import MemoryRW
from ..model.registry import SyscallRegistry
from ..model.types import (
    Composite,
    Scalar,
    SemanticType,
    SyscallSpec,
    Truncated,
    TypeKind,
    ValueNode,
)
from .policy import (
    Disposition,
    DispositionKind,
    REJECTED_RETURN,
    ReturnRule,
    ShimPolicy,
)


class KernelGateway(Protocol):
    def serve(self, spec: SyscallSpec, raw_args: list[int], mem: MemoryRW) -> int: ...


def sanitize_tree(rules, tree: Composite) -> Composite:
    """Apply field rules to an argument tree (pure; shared with the oracle)."""
    if not rules:
        return tree

    from ..model.types import FieldPath

    def rewrite(node: ValueNode, segs: tuple) -> ValueNode:
        if isinstance(node, Composite):
            kids = []
            for cname, child in node.children:
                seg = int(cname) if cname.isdigit() else cname
                kids.append((cname, rewrite(child, segs + (seg,))))
            return Composite(node.name, tuple(kids))
        fp = FieldPath(segs)
        for rp, rule in rules:
            if rp.matches(fp):
                return rule.apply(node)
        return node

    kids = []
    for cname, child in tree.children:
        kids.append((cname, rewrite(child, (cname,))))
    return Composite(tree.name, tuple(kids))


@dataclass
class ShimResult:
    ret: Optional[int]
    fault: Optional[str] = None
    disposition: str = DispositionKind.FORWARD_VERBATIM


class Shim:
    def __init__(
        self,
        policy: ShimPolicy,
        registry: SyscallRegistry,
        gateway: KernelGateway,
        internal_kernel,
        marshal_factory: Callable[[], MemoryRW],
    ):
        self.policy = policy
        self.registry = registry
        self.gateway = gateway
        self.internal_kernel = internal_kernel
        self.marshal_factory = marshal_factory
        self._counters: dict[str, int] = {}

    # -- invocation entry points ----------------------------------------

    def call(self, name: str, raw_args: list[int], app_mem: MemoryRW) -> ShimResult:
        """Wrapper invocation: the app calls through the shim's interface."""
        spec = self.registry.lookup(name)
        return self._apply(spec, raw_args, app_mem)

    def trap(self, number: int, raw_args: list[int], app_mem: MemoryRW) -> ShimResult:
        """Raw-trap invocation; serviced only with native syscall support."""
        if not self.policy.native_syscall_support:
            return ShimResult(None, fault="trap-unsupported")
        try:
            spec = self.registry.lookup_number(number)
        except KeyError:
            return ShimResult(-38, disposition=DispositionKind.REJECT)  # ENOSYS
        return self._apply(spec, raw_args, app_mem)

    # -- policy application ----------------------------------------------

    def _apply(self, spec: SyscallSpec, raw_args: list[int], app_mem: MemoryRW) -> ShimResult:
        disp = self.policy.disposition_for(spec.name)
        if disp.kind == DispositionKind.REJECT:
            return ShimResult(-abs(disp.error), disposition=disp.kind)
        if disp.kind == DispositionKind.SERVE_INTERNALLY:
            res = self.internal_kernel.serve(spec, raw_args, app_mem)
            return ShimResult(res.value, disposition=disp.kind)
        return self._forward(spec, disp, raw_args, app_mem)

    def _forward(
        self, spec: SyscallSpec, disp: Disposition, raw_args: list[int], app_mem: MemoryRW
    ) -> ShimResult:
        tree = encode_value_tree(spec, raw_args, app_mem, self.registry)
        tree = self._sanitize(spec.name, tree)
        out_spec, out_tree = self._distort(spec, disp, tree)
        marshal = self.marshal_factory()
        out_words = realize_args(out_spec, out_tree, marshal, self.registry)

        ret = self.gateway.serve(out_spec, out_words, marshal)

        returned = encode_value_tree(out_spec, out_words, marshal, self.registry)
        rule = self.policy.return_rule_for(spec.name)
        if not _return_ok(rule, ret, returned):
            return ShimResult(REJECTED_RETURN, disposition=disp.kind)
        self._copy_back(spec, raw_args, out_spec, out_words, marshal, app_mem)
        return ShimResult(ret, disposition=disp.kind)

    def _sanitize(self, name: str, tree: Composite) -> Composite:
        return sanitize_tree(self.policy.rules_for(name), tree)

    def _distort(
        self, spec: SyscallSpec, disp: Disposition, tree: Composite
    ) -> tuple[SyscallSpec, Composite]:
        if disp.kind != DispositionKind.FORWARD_DISTORTED or disp.distortion is None:
            return spec, tree
        d = disp.distortion
        target = self.registry.lookup(d.rename)
        children = dict(tree.children)
        order = [p.name for p in spec.params]
        for into, frm in d.merge_flags:
            a, b = children.get(into), children.get(frm)
            if isinstance(a, Scalar) and isinstance(b, Scalar):
                children[into] = Scalar(int(a.value) | int(b.value), a.tag)
            order.remove(frm)
            children.pop(frm, None)
        for pname, value in d.add_args:
            if isinstance(value, str) and value.startswith("state:"):
                n = self._counters.get(spec.name, 0)
                self._counters[spec.name] = n + 1
                concrete = n
            else:
                concrete = int(value)
            ptype = target.param(pname).type
            tag = "opaque" if ptype.kind is TypeKind.OPAQUE else "int"
            children[pname] = Scalar(concrete, tag)
            order.append(pname)
        return target, Composite(f"{target.name}.args", tuple((n, children[n]) for n in order))

    # -- out-parameter copy-back ------------------------------------------

    def _copy_back(
        self,
        spec: SyscallSpec,
        raw_args: list[int],
        out_spec: SyscallSpec,
        out_words: list[int],
        marshal: MemoryRW,
        app_mem: MemoryRW,
    ) -> None:
        out_index = {p.name: i for i, p in enumerate(out_spec.params)}
        src_siblings = {p.name: raw_args[i] for i, p in enumerate(spec.params)}
        for i, p in enumerate(spec.params):
            if p.dir.value == "in":
                continue
            j = out_index.get(p.name)
            if j is None:
                continue
            src_addr, dst_addr = out_words[j], raw_args[i]
            if src_addr == 0 or dst_addr == 0:
                continue
            span = _pointee_span(p.type, src_siblings, self.registry)
            if span <= 0:
                continue
            try:
                data = marshal.read(src_addr, span)
                app_mem.write(dst_addr, data)
            except MemoryAccessError:
                continue


def _pointee_span(t: SemanticType, siblings: dict[str, int], registry) -> int:
    """Byte length of the object behind an out-parameter pointer."""
    inner = t.target if t.kind is TypeKind.POINTER else t
    k = inner.kind
    if k is TypeKind.TIMESPEC:
        return 16
    if k is TypeKind.STRUCT:
        return struct_size(registry.struct(inner.struct_name), registry)
    if k is TypeKind.BUFFER:
        n = inner.length if inner.length is not None else max(
            0, min(siblings.get(inner.len_ref, 0), 8192)
        )
        return n
    if k is TypeKind.ARRAY:
        count = inner.length if inner.length is not None else max(
            0, min(siblings.get(inner.len_ref, 0), 64)
        )
        return count * _field_size(inner.target, registry)
    return 0


def _return_ok(rule: ReturnRule, ret: int, returned: Composite) -> bool:
    if rule.check == "none":
        return True
    if not rule.scalar_ok(ret):
        return False
    if rule.check == "full":
        for path, leaf in flatten(returned):
            for fc in rule.fields:
                if fc.path.matches(path) and not fc.holds(leaf):
                    return False
    return True
