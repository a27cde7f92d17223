"""Value-tree encoding, realization, and flattening.

``encode_value_tree`` turns raw argument words plus an address space into a
recursive snapshot: every pointer is dereferenced (depth-capped), nested
structs are walked field by field, and buffers are captured with a digest.
``realize_args`` is the inverse used by the harness: it materializes a
generated tree into an address space and yields the argument words to pass
to the syscall. ``flatten`` linearizes a tree into (path, leaf) pairs, the
substrate for field-level diffing.

Struct layouts are packed (no padding); buffers snapshot at most
BUFFER_READ_CAP bytes, and the digest covers the snapshot window.
"""

from __future__ import annotations

from typing import Union

from ..errors import MemoryAccessError
from .memory import MemoryReader, MemoryRW, read_c_string
from .registry import SyscallRegistry
from .types import (
    ARRAY_SNAPSHOT_CAP,
    DEREF_DEPTH_CAP,
    Bytes,
    Composite,
    FieldPath,
    NullPointer,
    Scalar,
    SemanticType,
    StructLayout,
    SyscallSpec,
    TIMESPEC_LAYOUT,
    Truncated,
    TypeKind,
    ValueNode,
)

BUFFER_READ_CAP = 8192

_SCALAR_TAGS = {
    TypeKind.INT: "int",
    TypeKind.ENUM: "enum",
    TypeKind.FLAGS: "flags",
    TypeKind.FD: "fd",
    TypeKind.OPAQUE: "opaque",
}


def _mask(value: int, width: int, signed: bool) -> int:
    value &= (1 << width) - 1
    if signed and value >= (1 << (width - 1)):
        value -= 1 << width
    return value


def _to_word(value: int) -> int:
    return value & 0xFFFF_FFFF_FFFF_FFFF


def struct_size(layout: StructLayout, registry: SyscallRegistry) -> int:
    total = 0
    for _, ftype in layout.fields:
        total += _field_size(ftype, registry)
    return total


def field_offset(layout: StructLayout, field_name: str, registry: SyscallRegistry) -> int:
    off = 0
    for fname, ftype in layout.fields:
        if fname == field_name:
            return off
        off += _field_size(ftype, registry)
    raise KeyError(field_name)


def _field_size(t: SemanticType, registry: SyscallRegistry) -> int:
    if t.kind is TypeKind.STRUCT:
        return struct_size(registry.struct(t.struct_name), registry)
    if t.kind is TypeKind.TIMESPEC:
        return 16
    if t.kind is TypeKind.ARRAY and t.length is not None:
        return t.length * _field_size(t.target, registry)
    return t.byte_size


# --------------------------------------------------------------------------
# Encoding (memory -> tree)
# --------------------------------------------------------------------------

def encode_value_tree(
    spec: SyscallSpec,
    raw_args: list[int],
    mem: MemoryReader,
    registry: SyscallRegistry,
) -> Composite:
    if len(raw_args) != len(spec.params):
        raise ValueError(
            f"{spec.name}: got {len(raw_args)} argument words, "
            f"spec has {len(spec.params)} params"
        )
    sibling_words = {p.name: raw_args[i] for i, p in enumerate(spec.params)}
    children = []
    for i, p in enumerate(spec.params):
        node = _encode_param(p.type, raw_args[i], mem, registry, sibling_words)
        children.append((p.name, node))
    return Composite(f"{spec.name}.args", tuple(children))


def _resolve_len(t: SemanticType, siblings: dict[str, int]) -> int:
    if t.length is not None:
        return t.length
    if t.len_ref is not None:
        raw = siblings.get(t.len_ref, 0)
        return max(0, _mask(raw, 64, True))
    return 0


def _encode_param(
    t: SemanticType,
    word: int,
    mem: MemoryReader,
    registry: SyscallRegistry,
    siblings: dict[str, int],
) -> ValueNode:
    k = t.kind
    if k in _SCALAR_TAGS:
        if k in (TypeKind.INT, TypeKind.ENUM, TypeKind.FLAGS):
            return Scalar(_mask(word, t.width, t.signed), _SCALAR_TAGS[k])
        if k is TypeKind.FD:
            return Scalar(_mask(word, 32, True), "fd")
        return Scalar(_to_word(word), "opaque")
    # everything else is reached through an address word
    if word == 0:
        return NullPointer()
    addr = _to_word(word)
    if k is TypeKind.PATH:
        s = read_c_string(mem, addr)
        if s is None:
            return Truncated("unreadable-memory", addr)
        return Scalar(s, "path")
    if k is TypeKind.BUFFER:
        return _encode_buffer(t, addr, mem, siblings)
    if k is TypeKind.POINTER:
        return _encode_at(t.target, addr, mem, registry, siblings, depth=1)
    if k in (TypeKind.STRUCT, TypeKind.TIMESPEC, TypeKind.ARRAY):
        return _encode_at(t, addr, mem, registry, siblings, depth=1)
    return Scalar(_to_word(word), "opaque")


def _encode_buffer(
    t: SemanticType, addr: int, mem: MemoryReader, siblings: dict[str, int]
) -> ValueNode:
    length = _resolve_len(t, siblings)
    window = min(length, BUFFER_READ_CAP)
    try:
        data = mem.read(addr, window)
    except MemoryAccessError:
        return Truncated("unreadable-memory", addr)
    node = Bytes.from_data(data)
    if length > window:
        # keep the declared length visible while hashing only the window
        node = Bytes(length, node.prefix, node.digest, None)
    return node


def _encode_at(
    t: SemanticType,
    addr: int,
    mem: MemoryReader,
    registry: SyscallRegistry,
    siblings: dict[str, int],
    depth: int,
) -> ValueNode:
    """Encode a pointed-to object located at ``addr``."""
    if depth > DEREF_DEPTH_CAP:
        return Truncated("depth-cap", addr)
    k = t.kind
    if k is TypeKind.TIMESPEC:
        return _encode_struct(TIMESPEC_LAYOUT, addr, mem, registry, depth)
    if k is TypeKind.STRUCT:
        return _encode_struct(registry.struct(t.struct_name), addr, mem, registry, depth)
    if k is TypeKind.ARRAY:
        n = min(_resolve_len(t, siblings), ARRAY_SNAPSHOT_CAP)
        return _encode_array(t.target, addr, n, mem, registry, siblings, depth)
    if k is TypeKind.BUFFER:
        return _encode_buffer(t, addr, mem, siblings)
    if k is TypeKind.PATH:
        s = read_c_string(mem, addr)
        return Truncated("unreadable-memory", addr) if s is None else Scalar(s, "path")
    if k is TypeKind.POINTER:
        try:
            word = int.from_bytes(mem.read(addr, 8), "little")
        except MemoryAccessError:
            return Truncated("unreadable-memory", addr)
        if word == 0:
            return NullPointer()
        return _encode_at(t.target, word, mem, registry, siblings, depth + 1)
    # plain scalar behind a pointer
    size = t.byte_size
    try:
        raw = int.from_bytes(mem.read(addr, size), "little")
    except MemoryAccessError:
        return Truncated("unreadable-memory", addr)
    if k in (TypeKind.INT, TypeKind.ENUM, TypeKind.FLAGS):
        return Scalar(_mask(raw, t.width, t.signed), _SCALAR_TAGS[k])
    if k is TypeKind.FD:
        return Scalar(_mask(raw, 32, True), "fd")
    return Scalar(_to_word(raw), "opaque")


def _encode_struct(
    layout: StructLayout,
    addr: int,
    mem: MemoryReader,
    registry: SyscallRegistry,
    depth: int,
) -> ValueNode:
    # read sibling integer fields first so len_refs resolve
    sizes = [( fname, ftype, _field_size(ftype, registry)) for fname, ftype in layout.fields]
    offsets = {}
    off = 0
    for fname, ftype, size in sizes:
        offsets[fname] = (ftype, off, size)
        off += size
    sibling_vals: dict[str, int] = {}
    for fname, (ftype, foff, fsize) in offsets.items():
        if ftype.kind in (TypeKind.INT, TypeKind.OPAQUE, TypeKind.FD):
            try:
                raw = int.from_bytes(mem.read(addr + foff, min(fsize, 8)), "little")
            except MemoryAccessError:
                continue
            sibling_vals[fname] = _mask(raw, min(fsize, 8) * 8, ftype.signed)

    children = []
    for fname, (ftype, foff, fsize) in offsets.items():
        children.append((fname, _encode_field(ftype, addr + foff, mem, registry, sibling_vals, depth)))
    if children and all(
        isinstance(c, Truncated) and c.reason == "unreadable-memory" for _, c in children
    ):
        return Truncated("unreadable-memory", addr)
    return Composite(layout.name, tuple(children))


def _encode_field(
    t: SemanticType,
    addr: int,
    mem: MemoryReader,
    registry: SyscallRegistry,
    siblings: dict[str, int],
    depth: int,
) -> ValueNode:
    k = t.kind
    if k in (TypeKind.INT, TypeKind.ENUM, TypeKind.FLAGS, TypeKind.FD, TypeKind.OPAQUE):
        size = t.byte_size
        try:
            raw = int.from_bytes(mem.read(addr, size), "little")
        except MemoryAccessError:
            return Truncated("unreadable-memory", addr)
        if k is TypeKind.FD:
            return Scalar(_mask(raw, 32, True), "fd")
        if k is TypeKind.OPAQUE:
            return Scalar(_to_word(raw), "opaque")
        return Scalar(_mask(raw, t.width, t.signed), _SCALAR_TAGS[k])
    if k is TypeKind.STRUCT:
        return _encode_struct(registry.struct(t.struct_name), addr, mem, registry, depth)
    if k is TypeKind.TIMESPEC:
        return _encode_struct(TIMESPEC_LAYOUT, addr, mem, registry, depth)
    if k is TypeKind.ARRAY and t.length is not None:
        return _encode_array(t.target, addr, t.length, mem, registry, siblings, depth)
    if k is TypeKind.ARRAY:
        n = min(_resolve_len(t, siblings), ARRAY_SNAPSHOT_CAP)
        return _encode_array(t.target, addr, n, mem, registry, siblings, depth)
    # pointer-valued field (path / buffer / ptr)
    try:
        word = int.from_bytes(mem.read(addr, 8), "little")
    except MemoryAccessError:
        return Truncated("unreadable-memory", addr)
    if word == 0:
        return NullPointer()
    if k is TypeKind.PATH:
        s = read_c_string(mem, word)
        return Truncated("unreadable-memory", word) if s is None else Scalar(s, "path")
    if k is TypeKind.BUFFER:
        if depth + 1 > DEREF_DEPTH_CAP:
            return Truncated("depth-cap", word)
        return _encode_buffer(t, word, mem, siblings)
    if k is TypeKind.POINTER:
        return _encode_at(t.target, word, mem, registry, siblings, depth + 1)
    return Scalar(_to_word(word), "opaque")


def _encode_array(
    elem: SemanticType,
    addr: int,
    count: int,
    mem: MemoryReader,
    registry: SyscallRegistry,
    siblings: dict[str, int],
    depth: int,
) -> ValueNode:
    stride = _field_size(elem, registry)
    children = []
    capped = False
    if count > ARRAY_SNAPSHOT_CAP:
        count = ARRAY_SNAPSHOT_CAP
        capped = True
    for i in range(count):
        children.append((str(i), _encode_field(elem, addr + i * stride, mem, registry, siblings, depth)))
    if capped:
        children.append(("rest", Truncated("array-cap", addr)))
    return Composite("[]", tuple(children))


# --------------------------------------------------------------------------
# Realization (tree -> memory + argument words)
# --------------------------------------------------------------------------

def realize_args(
    spec: SyscallSpec,
    tree: Composite,
    mem: MemoryRW,
    registry: SyscallRegistry,
) -> list[int]:
    """Materialize a generated argument tree; returns raw argument words.

    Children must be in spec parameter order. Scalars placed at pointer
    positions are passed through as raw (wild) addresses, which is how the
    fully-random strategy produces unmapped pointers on purpose.
    """
    if len(tree.children) != len(spec.params):
        raise ValueError(f"{spec.name}: tree arity != param arity")
    words = []
    for (cname, node), p in zip(tree.children, spec.params):
        if cname != p.name:
            raise ValueError(f"{spec.name}: tree child {cname!r} != param {p.name!r}")
        words.append(_realize_param(p.type, node, mem, registry))
    return words


def _realize_param(t: SemanticType, node: ValueNode, mem: MemoryRW, registry: SyscallRegistry) -> int:
    if isinstance(node, NullPointer):
        return 0
    if isinstance(node, Truncated):
        # forward the original (bad) address as-is
        return _to_word(node.address)
    if isinstance(node, Scalar):
        if t.kind is TypeKind.PATH and isinstance(node.value, str):
            raw = node.value.encode("utf-8") + b"\x00"
            addr = mem.alloc(len(raw))
            mem.write(addr, raw)
            return addr
        return _to_word(int(node.value))
    if isinstance(node, Bytes):
        data = node.data if node.data is not None else node.prefix
        addr = mem.alloc(max(len(data), 1))
        mem.write(addr, data)
        return addr
    if isinstance(node, Composite):
        return _realize_composite(t, node, mem, registry)
    raise ValueError(f"cannot realize node {node!r}")


def _pointee_type(t: SemanticType) -> SemanticType:
    return t.target if t.kind is TypeKind.POINTER else t


def _realize_composite(t: SemanticType, node: Composite, mem: MemoryRW, registry: SyscallRegistry) -> int:
    inner = _pointee_type(t)
    size = _composite_size(inner, node, registry)
    addr = mem.alloc(size)
    _write_composite(inner, node, addr, mem, registry)
    return addr


def _composite_size(t: SemanticType, node: Composite, registry: SyscallRegistry) -> int:
    if t.kind is TypeKind.TIMESPEC:
        return 16
    if t.kind is TypeKind.STRUCT:
        return struct_size(registry.struct(t.struct_name), registry)
    if t.kind is TypeKind.ARRAY:
        return max(1, len(node.children)) * _field_size(t.target, registry)
    raise ValueError(f"not a composite type: {t.kind}")


def _write_composite(
    t: SemanticType, node: Composite, addr: int, mem: MemoryRW, registry: SyscallRegistry
) -> None:
    if t.kind is TypeKind.TIMESPEC:
        layout = TIMESPEC_LAYOUT
        for (fname, ftype), (cname, child) in zip(layout.fields, node.children):
            mem.write(addr, int(_scalar_of(child)).to_bytes(8, "little", signed=True))
            addr += 8
        return
    if t.kind is TypeKind.STRUCT:
        layout = registry.struct(t.struct_name)
        off = 0
        by_name = dict(node.children)
        for fname, ftype in layout.fields:
            child = by_name.get(fname, NullPointer())
            _write_field(ftype, child, addr + off, mem, registry)
            off += _field_size(ftype, registry)
        return
    if t.kind is TypeKind.ARRAY:
        stride = _field_size(t.target, registry)
        for i, (_, child) in enumerate(node.children):
            _write_field(t.target, child, addr + i * stride, mem, registry)
        return
    raise ValueError(f"not a composite type: {t.kind}")


def _scalar_of(node: ValueNode) -> int:
    if isinstance(node, Scalar) and isinstance(node.value, int):
        return node.value
    if isinstance(node, (NullPointer, Truncated)):
        return 0
    raise ValueError(f"expected integer scalar, got {node!r}")


def _write_field(
    t: SemanticType, node: ValueNode, addr: int, mem: MemoryRW, registry: SyscallRegistry
) -> None:
    k = t.kind
    if k in (TypeKind.INT, TypeKind.ENUM, TypeKind.FLAGS, TypeKind.FD, TypeKind.OPAQUE):
        size = t.byte_size
        val = _scalar_of(node) & ((1 << (size * 8)) - 1)
        mem.write(addr, val.to_bytes(size, "little"))
        return
    if k in (TypeKind.STRUCT, TypeKind.TIMESPEC):
        if isinstance(node, Composite):
            _write_composite(t, node, addr, mem, registry)
        return
    if k is TypeKind.ARRAY and isinstance(node, Composite):
        stride = _field_size(t.target, registry)
        for i, (_, child) in enumerate(node.children):
            _write_field(t.target, child, addr + i * stride, mem, registry)
        return
    # pointer-valued slot
    if isinstance(node, NullPointer):
        mem.write(addr, b"\x00" * 8)
        return
    if isinstance(node, Truncated):
        mem.write(addr, _to_word(node.address).to_bytes(8, "little"))
        return
    if isinstance(node, Scalar) and k is TypeKind.PATH and isinstance(node.value, str):
        raw = node.value.encode("utf-8") + b"\x00"
        p = mem.alloc(len(raw))
        mem.write(p, raw)
        mem.write(addr, p.to_bytes(8, "little"))
        return
    if isinstance(node, Bytes):
        data = node.data if node.data is not None else node.prefix
        p = mem.alloc(max(len(data), 1))
        mem.write(p, data)
        mem.write(addr, p.to_bytes(8, "little"))
        return
    if isinstance(node, Composite):
        p = _realize_composite(t, node, mem, registry)
        mem.write(addr, p.to_bytes(8, "little"))
        return
    if isinstance(node, Scalar):
        # wild pointer word
        mem.write(addr, _to_word(int(node.value)).to_bytes(8, "little"))
        return
    raise ValueError(f"cannot write node {node!r}")


# --------------------------------------------------------------------------
# Flattening
# --------------------------------------------------------------------------

def flatten(tree: Composite) -> list[tuple[FieldPath, ValueNode]]:
    """Depth-first, declaration-order list of every leaf with its path.

    Deterministic for a given tree; the ordering never depends on memory
    addresses.
    """
    out: list[tuple[FieldPath, ValueNode]] = []

    def walk(node: ValueNode, segs: tuple):
        if isinstance(node, Composite):
            for name, child in node.children:
                seg = int(name) if name.isdigit() else name
                walk(child, segs + (seg,))
        else:
            out.append((FieldPath(segs), node))

    for name, child in tree.children:
        walk(child, (name,))
    return out


# --------------------------------------------------------------------------
# JSON wire form (documented in docs/log-format.md)
# --------------------------------------------------------------------------

def tree_to_json(node: ValueNode):
    if isinstance(node, Scalar):
        return {"k": "s", "t": node.tag, "v": node.value}
    if isinstance(node, Bytes):
        doc = {"k": "b", "len": node.length, "pfx": node.prefix.hex(), "sha": node.digest}
        if node.data is not None:
            doc["v"] = node.data.hex()
        return doc
    if isinstance(node, Composite):
        return {"k": "c", "n": node.name, "f": [[n, tree_to_json(c)] for n, c in node.children]}
    if isinstance(node, NullPointer):
        return {"k": "0"}
    if isinstance(node, Truncated):
        return {"k": "x", "why": node.reason, "addr": node.address}
    raise ValueError(f"unserializable node {node!r}")


def tree_from_json(doc) -> ValueNode:
    k = doc["k"]
    if k == "s":
        return Scalar(doc["v"], doc["t"])
    if k == "b":
        data = bytes.fromhex(doc["v"]) if "v" in doc else None
        return Bytes(doc["len"], bytes.fromhex(doc["pfx"]), doc["sha"], data)
    if k == "c":
        return Composite(doc["n"], tuple((n, tree_from_json(c)) for n, c in doc["f"]))
    if k == "0":
        return NullPointer()
    if k == "x":
        return Truncated(doc["why"], doc.get("addr", 0))
    raise ValueError(f"bad tree node kind {k!r}")
