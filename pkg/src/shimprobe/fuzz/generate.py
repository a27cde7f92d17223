"""Seeded test-case generation under three strategies.

* semantic-correct: arguments a benign kernel serves without error:
  cross-field constraints (buffer length = count field, descriptors from
  the prepared resource set) are honored, and a handful of per-syscall
  constructor overrides encode the constraints the generic walk cannot.
* type-correct-random: every field respects its declared type shape but
  not cross-field semantics; enums degrade to random integers of the
  field width and buffer lengths may be erroneous.
* fully-random: scalar leaves are uniform over their bit width and
  pointers may be null, garbage (wild), or backed by random contents.

Generation is total and deterministic: the same (spec, strategy, seed)
always yields the same TestCase. Descriptor-like leaves are emitted as
resource placeholders (tag ``res:*``) resolved against a ResourceSet just
before realization, which keeps generation independent of live state.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from ..model.registry import SyscallRegistry
from ..model.types import (
    Bytes,
    Composite,
    NullPointer,
    Param,
    Scalar,
    SemanticType,
    StateDep,
    SyscallSpec,
    TIMESPEC_LAYOUT,
    TypeKind,
    ValueNode,
)


class Strategy(str, Enum):
    SEMANTIC = "semantic-correct"
    TYPED = "type-correct-random"
    RANDOM = "fully-random"


@dataclass(frozen=True)
class DomainLimits:
    """Optional domain discretization, used by enumeration-style tests."""

    int_bits: Optional[int] = None      # cap scalar widths to this many bits
    max_buf: int = 64
    max_array: int = 3
    path_pool: tuple[str, ...] = ("exists.txt", "data.bin", "notes.txt", ".")


DEFAULT_LIMITS = DomainLimits()


@dataclass(frozen=True)
class TestCase:
    spec_name: str
    strategy: Strategy
    seed: int
    args: Composite                      # may contain res:* placeholders
    expected_resources: frozenset[str]


def expected_resources(spec: SyscallSpec) -> frozenset[str]:
    out = set()
    if StateDep.NEEDS_OPEN_FD in spec.state_deps:
        out.add("fd:" + (spec.hint("fd_kind") or "file"))
    if StateDep.NEEDS_MEMORY_REGION in spec.state_deps:
        out.add("region")
    if StateDep.NEEDS_THREAD in spec.state_deps:
        out.add("thread")
    return frozenset(out)


def generate(
    spec: SyscallSpec,
    strategy: Strategy,
    seed: int,
    registry: SyscallRegistry,
    limits: DomainLimits = DEFAULT_LIMITS,
) -> TestCase:
    rng = random.Random(seed)
    gen = _Generator(registry, rng, strategy, limits)
    if strategy is Strategy.SEMANTIC:
        builder = SEMANTIC_BUILDERS.get(spec.name)
        tree = builder(gen, spec) if builder else gen.semantic_args(spec)
    else:
        tree = gen.generic_args(spec)
    return TestCase(spec.name, strategy, seed, tree, expected_resources(spec))


# --------------------------------------------------------------------------
# resource placeholder resolution
# --------------------------------------------------------------------------

def resolve_resources(node: ValueNode, resources) -> ValueNode:
    """Replace res:* placeholder scalars with live resource values."""
    if isinstance(node, Scalar) and node.tag.startswith("res:"):
        kind = node.tag[4:]
        if kind.startswith("fd"):
            return Scalar(resources.any_fd(), "fd")
        if kind == "region:base":
            return Scalar(resources.region_base(), "opaque")
        if kind == "region:len":
            return Scalar(resources.region_len(), "int")
        if kind == "path":
            return Scalar(resources.scratch_path(), "path")
        raise ValueError(f"unknown resource placeholder {node.tag!r}")
    if isinstance(node, Composite):
        return Composite(
            node.name,
            tuple((n, resolve_resources(c, resources)) for n, c in node.children),
        )
    return node


# --------------------------------------------------------------------------
# generator core
# --------------------------------------------------------------------------

class _Generator:
    def __init__(self, registry, rng: random.Random, strategy: Strategy, limits: DomainLimits):
        self.registry = registry
        self.rng = rng
        self.strategy = strategy
        self.limits = limits

    # shared helpers ----------------------------------------------------

    def _width(self, t: SemanticType) -> int:
        w = t.bit_width()
        if self.limits.int_bits is not None:
            w = min(w, self.limits.int_bits)
        return w

    def _rand_bits(self, t: SemanticType) -> int:
        w = self._width(t)
        val = self.rng.getrandbits(w)
        if t.signed and val >= (1 << (w - 1)):
            val -= 1 << w
        return val

    def _small_int(self, t: SemanticType, hi: int = 100) -> int:
        w = self._width(t)
        return self.rng.randint(0, min(hi, (1 << max(w - 1, 1)) - 1))

    def _tag_for(self, t: SemanticType) -> str:
        return {
            TypeKind.INT: "int", TypeKind.ENUM: "enum", TypeKind.FLAGS: "flags",
            TypeKind.FD: "fd", TypeKind.OPAQUE: "opaque",
        }[t.kind]

    # semantic-correct ---------------------------------------------------

    def semantic_args(self, spec: SyscallSpec) -> Composite:
        plan = self._buffer_plan(spec.params)
        children = [
            (p.name, self.semantic_node(spec, p.name, p.type, plan, out=(p.dir.value != "in")))
            for p in spec.params
        ]
        return Composite(f"{spec.name}.args", tuple(children))

    def _buffer_plan(self, params) -> dict[str, int]:
        """Pre-draw lengths for buffers/arrays so len-ref fields agree."""
        plan = {}
        for p in params:
            t = p.type
            inner = t.target if t.kind is TypeKind.POINTER else t
            if inner.kind is TypeKind.BUFFER and inner.len_ref:
                plan[inner.len_ref] = self.rng.randint(1, min(self.limits.max_buf, 64))
            elif inner.kind is TypeKind.ARRAY and inner.len_ref:
                plan[inner.len_ref] = self.rng.randint(1, self.limits.max_array)
        return plan

    def semantic_node(
        self, spec, name: str, t: SemanticType, plan: dict[str, int], out: bool = False
    ) -> ValueNode:
        k = t.kind
        if k is TypeKind.FD:
            kind = spec.hint("fd_kind") or "file"
            return Scalar(0, f"res:fd:{kind}")
        if k is TypeKind.INT:
            if name in plan:
                return Scalar(plan[name], "int")
            return Scalar(self._small_int(t), "int")
        if k is TypeKind.ENUM:
            return Scalar(self.rng.choice(t.values), "enum")
        if k is TypeKind.FLAGS:
            bits = [b for b in range(t.width) if t.universe >> b & 1]
            val = 0
            for b in bits:
                if self.rng.random() < 0.4:
                    val |= 1 << b
            return Scalar(val & t.universe, "flags")
        if k is TypeKind.OPAQUE:
            return Scalar(0, "opaque")
        if k is TypeKind.PATH:
            if spec.hint("path_from_resource"):
                return Scalar("", "res:path")
            return Scalar(self.rng.choice(self.limits.path_pool), "path")
        if k is TypeKind.BUFFER:
            n = plan.get(t.len_ref, t.length if t.length is not None else self.rng.randint(1, 32))
            data = b"\x00" * n if out else bytes(self.rng.getrandbits(8) for _ in range(n))
            return Bytes.from_data(data)
        if k is TypeKind.POINTER:
            if t.nullable and self.rng.random() < 0.2:
                return NullPointer()
            return self.semantic_node(spec, name, t.target, plan, out)
        if k is TypeKind.TIMESPEC:
            return self.timespec_node(0, self.rng.randint(0, 999_999))
        if k is TypeKind.STRUCT:
            layout = self.registry.struct(t.struct_name)
            inner_plan = self._buffer_plan([Param(fn, ft) for fn, ft in layout.fields])
            kids = tuple(
                (fn, self.semantic_node(spec, fn, ft, inner_plan, out))
                for fn, ft in layout.fields
            )
            return Composite(layout.name, kids)
        if k is TypeKind.ARRAY:
            n = plan.get(t.len_ref, t.length if t.length is not None else self.rng.randint(1, self.limits.max_array))
            kids = tuple(
                (str(i), self.semantic_node(spec, f"{name}[{i}]", t.target, plan, out))
                for i in range(n)
            )
            return Composite("[]", kids)
        raise ValueError(f"unhandled kind {k}")

    def timespec_node(self, sec: int, nsec: int) -> Composite:
        return Composite(
            TIMESPEC_LAYOUT.name,
            (("tv_sec", Scalar(sec, "int")), ("tv_nsec", Scalar(nsec, "int"))),
        )

    # type-correct-random and fully-random --------------------------------

    def generic_args(self, spec: SyscallSpec) -> Composite:
        children = [(p.name, self.generic_node(p.type)) for p in spec.params]
        return Composite(f"{spec.name}.args", tuple(children))

    def generic_node(self, t: SemanticType) -> ValueNode:
        wild_ok = self.strategy is Strategy.RANDOM
        k = t.kind
        if k in (TypeKind.INT, TypeKind.ENUM, TypeKind.FLAGS, TypeKind.FD, TypeKind.OPAQUE):
            # enums and flags degrade to random integers of the field width
            return Scalar(self._rand_bits(t), self._tag_for(t))
        if k is TypeKind.PATH:
            if wild_ok and self.rng.random() < 0.2:
                return Scalar(self.rng.getrandbits(48), "opaque")
            pool = list(self.limits.path_pool)
            if self.rng.random() < 0.5 and pool:
                return Scalar(self.rng.choice(pool), "path")
            n = self.rng.randint(1, 16)
            return Scalar("".join(self.rng.choice("abcdefgh./_-") for _ in range(n)), "path")
        if k is TypeKind.BUFFER:
            if wild_ok and self.rng.random() < 0.2:
                return Scalar(self.rng.getrandbits(48), "opaque")
            n = self.rng.randint(0, min(self.limits.max_buf, 64))
            return Bytes.from_data(bytes(self.rng.getrandbits(8) for _ in range(n)))
        if k is TypeKind.POINTER:
            if t.nullable and self.rng.random() < (0.2 if not wild_ok else 0.25):
                return NullPointer()
            if wild_ok and self.rng.random() < 0.2:
                return Scalar(self.rng.getrandbits(48), "opaque")
            return self.generic_node(t.target)
        if k is TypeKind.TIMESPEC:
            return self.timespec_node(
                self._rand_bits(SemanticType(TypeKind.INT, width=64)),
                self._rand_bits(SemanticType(TypeKind.INT, width=64)),
            )
        if k is TypeKind.STRUCT:
            layout = self.registry.struct(t.struct_name)
            kids = tuple((fn, self.generic_node(ft)) for fn, ft in layout.fields)
            return Composite(layout.name, kids)
        if k is TypeKind.ARRAY:
            n = t.length if t.length is not None else self.rng.randint(0, self.limits.max_array)
            kids = tuple((str(i), self.generic_node(t.target)) for i in range(n))
            return Composite("[]", kids)
        raise ValueError(f"unhandled kind {k}")


# --------------------------------------------------------------------------
# per-syscall semantic constructors (cross-field constraints the generic
# walk cannot express)
# --------------------------------------------------------------------------

def _args(spec: SyscallSpec, **kw) -> Composite:
    return Composite(f"{spec.name}.args", tuple((p.name, kw[p.name]) for p in spec.params))


def _sockaddr(rng) -> Composite:
    zeros = Composite("[]", tuple((str(i), Scalar(0, "int")) for i in range(8)))
    return Composite("sockaddr_in", (
        ("sin_family", Scalar(2, "int")),
        ("sin_port", Scalar(rng.randint(1024, 60000), "int")),
        ("sin_addr", Scalar(0x7F000001, "int")),
        ("sin_zero", zeros),
    ))


def _sem_mmap(g: _Generator, spec):
    rng = g.rng
    anonymous = rng.random() < 0.6
    flags = 0x22 if anonymous else 0x02        # PRIVATE|ANONYMOUS vs PRIVATE
    fd: ValueNode = Scalar(-1, "fd") if anonymous else Scalar(0, "res:fd:file")
    return _args(
        spec,
        addr=Scalar(0, "opaque"),
        length=Scalar(4096 * rng.randint(1, 4), "int"),
        prot=Scalar(rng.choice([0x1, 0x3, 0x7]), "flags"),
        flags=Scalar(flags, "flags"),
        fd=fd,
        offset=Scalar(0, "int"),
    )


def _sem_region_op(g: _Generator, spec):
    rng = g.rng
    kw = {
        "addr": Scalar(0, "res:region:base"),
        "length": Scalar(0, "res:region:len"),
    }
    if spec.name == "mprotect":
        kw["prot"] = Scalar(rng.choice([0x1, 0x3, 0x5]), "flags")
    if spec.name == "madvise":
        kw["advice"] = Scalar(rng.choice([0, 1, 2, 3, 4]), "enum")
    return _args(spec, **kw)


def _sem_lseek(g: _Generator, spec):
    rng = g.rng
    whence, offset = rng.choice([(0, rng.randint(0, 64)), (1, rng.randint(0, 8)), (2, 0)])
    return _args(
        spec,
        fd=Scalar(0, "res:fd:file"),
        offset=Scalar(offset, "int"),
        whence=Scalar(whence, "enum"),
    )


def _sem_sleep(g: _Generator, spec):
    rng = g.rng
    req = g.timespec_node(0, rng.randint(0, 999_999))
    rem = NullPointer() if rng.random() < 0.3 else g.timespec_node(0, 0)
    kw = {"req": req, "rem": rem}
    if spec.name == "clock_nanosleep":
        kw["clock_id"] = Scalar(rng.choice([0, 1]), "enum")
        kw["flags"] = Scalar(0, "flags")
    return _args(spec, **kw)


def _sem_futex(g: _Generator, spec):
    rng = g.rng
    word = rng.randint(0, 7)
    op = rng.choice([0, 1])
    # a WAIT always carries a short timeout: against a real kernel a
    # matching word with no timeout would park the harness forever
    timeout = g.timespec_node(0, rng.randint(0, 999_999)) if op == 0 else NullPointer()
    return _args(
        spec,
        uaddr=Composite("futex_word", (("value", Scalar(word, "int")),)),
        futex_op=Scalar(op, "enum"),
        val=Scalar(word if op == 0 else rng.randint(1, 4), "int"),
        timeout=timeout,
        uaddr2=Scalar(0, "opaque"),
        val3=Scalar(0, "int"),
    )


def _sem_connect(g: _Generator, spec):
    return _args(
        spec,
        sockfd=Scalar(0, "res:fd:socket"),
        addr=_sockaddr(g.rng),
        addrlen=Scalar(16, "int"),
    )


def _sem_bind(g: _Generator, spec):
    return _args(
        spec,
        sockfd=Scalar(0, "res:fd:socket"),
        addr=_sockaddr(g.rng),
        addrlen=Scalar(16, "int"),
    )


def _sem_sendto(g: _Generator, spec):
    rng = g.rng
    n = rng.randint(1, 48)
    return _args(
        spec,
        sockfd=Scalar(0, "res:fd:socket_connected"),
        buf=Bytes.from_data(bytes(rng.getrandbits(8) for _ in range(n))),
        len=Scalar(n, "int"),
        flags=Scalar(0, "flags"),
        dest_addr=_sockaddr(rng) if rng.random() < 0.5 else NullPointer(),
        addrlen=Scalar(16, "int"),
    )


def _sem_readlink(g: _Generator, spec):
    n = g.rng.randint(16, 64)
    return _args(
        spec,
        pathname=Scalar("link.txt", "path"),
        buf=Bytes.from_data(b"\x00" * n),
        bufsiz=Scalar(n, "int"),
    )


def _msghdr(g: _Generator, out: bool) -> Composite:
    rng = g.rng
    niov = rng.randint(1, 2)
    iovs = []
    for i in range(niov):
        n = rng.randint(1, 32)
        data = b"\x00" * n if out else bytes(rng.getrandbits(8) for _ in range(n))
        iovs.append((str(i), Composite("iovec", (
            ("iov_base", Bytes.from_data(data)),
            ("iov_len", Scalar(n, "int")),
        ))))
    return Composite("msghdr", (
        ("msg_name", NullPointer()),
        ("msg_namelen", Scalar(0, "int")),
        ("msg_pad0", Scalar(0, "int")),
        ("msg_iov", Composite("[]", tuple(iovs))),
        ("msg_iovlen", Scalar(niov, "int")),
        ("msg_control", NullPointer()),
        ("msg_controllen", Scalar(0, "int")),
        ("msg_flags", Scalar(0, "flags")),
        ("msg_pad1", Scalar(0, "int")),
    ))


def _sem_sendmsg(g: _Generator, spec):
    return _args(
        spec,
        sockfd=Scalar(0, "res:fd:socket_connected"),
        msg=_msghdr(g, out=False),
        flags=Scalar(0, "flags"),
    )


def _sem_recvmsg(g: _Generator, spec):
    return _args(
        spec,
        sockfd=Scalar(0, "res:fd:socket_connected"),
        msg=_msghdr(g, out=True),
        flags=Scalar(0, "flags"),
    )


def _zero_sockaddr() -> Composite:
    zeros = Composite("[]", tuple((str(i), Scalar(0, "int")) for i in range(8)))
    return Composite("sockaddr_in", (
        ("sin_family", Scalar(0, "int")),
        ("sin_port", Scalar(0, "int")),
        ("sin_addr", Scalar(0, "int")),
        ("sin_zero", zeros),
    ))


def _sem_accept(g: _Generator, spec):
    rng = g.rng
    return _args(
        spec,
        sockfd=Scalar(0, "res:fd:socket_listening"),
        addr=_zero_sockaddr() if rng.random() < 0.7 else NullPointer(),
        addrlen=Composite("socklen_cell", (("value", Scalar(16, "int")),)),
    )


def _sem_recvfrom(g: _Generator, spec):
    rng = g.rng
    n = rng.randint(1, 48)
    return _args(
        spec,
        sockfd=Scalar(0, "res:fd:socket_connected"),
        buf=Bytes.from_data(b"\x00" * n),
        len=Scalar(n, "int"),
        flags=Scalar(0, "flags"),
        src_addr=_zero_sockaddr() if rng.random() < 0.5 else NullPointer(),
        addrlen=Composite("socklen_cell", (("value", Scalar(16, "int")),)),
    )


def _sem_getdents(g: _Generator, spec):
    n = g.rng.randint(512, 1024)
    return _args(
        spec,
        fd=Scalar(0, "res:fd:dir"),
        dirp=Bytes.from_data(b"\x00" * n),
        count=Scalar(n, "int"),
    )


def _sem_openat(g: _Generator, spec):
    rng = g.rng
    return _args(
        spec,
        dirfd=Scalar(0, "res:fd:dir"),
        pathname=Scalar(rng.choice(["exists.txt", "data.bin", "notes.txt"]), "path"),
        flags=Scalar(rng.choice([0, 1, 2]), "flags"),
        mode=Scalar(0, "flags"),
    )


def _sem_brk(g: _Generator, spec):
    return _args(spec, addr=Scalar(0, "opaque"))


SEMANTIC_BUILDERS: dict[str, Callable] = {
    "mmap": _sem_mmap,
    "munmap": _sem_region_op,
    "mprotect": _sem_region_op,
    "madvise": _sem_region_op,
    "lseek": _sem_lseek,
    "nanosleep": _sem_sleep,
    "clock_nanosleep": _sem_sleep,
    "futex": _sem_futex,
    "connect": _sem_connect,
    "bind": _sem_bind,
    "sendto": _sem_sendto,
    "sendmsg": _sem_sendmsg,
    "recvmsg": _sem_recvmsg,
    "readlink": _sem_readlink,
    "openat": _sem_openat,
    "brk": _sem_brk,
    "accept": _sem_accept,
    "recvfrom": _sem_recvfrom,
    "getdents": _sem_getdents,
}
