"""Domain types for the syscall model.

A ``SyscallSpec`` is the machine-readable signature of one syscall:
parameter semantic types, nested struct layouts, and state dependencies.
A ``ValueNode`` tree is the recursive snapshot of one call's arguments with
all referenced structures dereferenced; it is the unit compared between the
in-sandbox and kernel-side halves of a session.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Union

# Snapshot limits: pointer chains deeper than DEREF_DEPTH_CAP and arrays
# longer than ARRAY_SNAPSHOT_CAP are truncated so logs stay finite.
DEREF_DEPTH_CAP = 4
ARRAY_SNAPSHOT_CAP = 64

# Byte buffers longer than this are logged as (length, prefix, digest)
# instead of full contents; digest inequality still flags content change.
BUFFER_INLINE_CAP = 256
BUFFER_PREFIX_LEN = 32


class TypeKind(str, Enum):
    INT = "int"
    ENUM = "enum"
    FLAGS = "flags"
    FD = "fd"
    PATH = "path"
    BUFFER = "buffer"
    STRUCT = "struct"
    POINTER = "pointer"
    ARRAY = "array"
    TIMESPEC = "timespec"
    OPAQUE = "opaque"


@dataclass(frozen=True)
class SemanticType:
    """One parameter or field type.

    ``width`` is in bits and meaningful for int/enum/flags.  ``len_ref``
    names a sibling integer field holding a buffer/array length; ``length``
    is a fixed element count for arrays or byte count for buffers.
    """

    kind: TypeKind
    width: int = 64
    signed: bool = True
    values: tuple[int, ...] = ()          # enum: allowed values
    universe: int = 0                     # flags: bit-mask universe
    struct_name: Optional[str] = None
    target: Optional["SemanticType"] = None   # pointer/array element
    nullable: bool = True                 # pointer
    len_ref: Optional[str] = None         # buffer/array dynamic length
    length: Optional[int] = None          # buffer/array fixed length

    def __post_init__(self):
        if self.kind is TypeKind.ENUM and not self.values:
            raise ValueError("enum allowed-values must be non-empty")
        if self.kind is TypeKind.FLAGS and self.universe == 0:
            raise ValueError("flags universe must be non-zero")
        if self.kind in (TypeKind.INT, TypeKind.ENUM, TypeKind.FLAGS):
            if self.width not in (8, 16, 32, 64):
                raise ValueError(f"unsupported bit width {self.width}")

    @property
    def byte_size(self) -> int:
        """Inline size of this field inside a struct (pointers are words)."""
        if self.kind in (TypeKind.INT, TypeKind.ENUM, TypeKind.FLAGS):
            return self.width // 8
        # fd is an int32 at the ABI level but occupies one slot in structs
        if self.kind is TypeKind.FD:
            return 4
        # path/buffer/pointer are stored as an 8-byte address inline
        return 8

    def bit_width(self) -> int:
        """Information width of the scalar leaf, for leak accounting."""
        if self.kind in (TypeKind.INT, TypeKind.ENUM, TypeKind.FLAGS):
            return self.width
        if self.kind is TypeKind.FD:
            return 32
        return 64


@dataclass(frozen=True)
class StructLayout:
    """Named, ordered field list. Field names must be unique."""

    name: str
    fields: tuple[tuple[str, SemanticType], ...]

    def __post_init__(self):
        names = [n for n, _ in self.fields]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate field name in struct {self.name}")

    def field_type(self, name: str) -> SemanticType:
        for n, t in self.fields:
            if n == name:
                return t
        raise KeyError(name)


# The built-in layout used by the TIMESPEC kind.
TIMESPEC_LAYOUT = StructLayout(
    "timespec",
    (
        ("tv_sec", SemanticType(TypeKind.INT, width=64, signed=True)),
        ("tv_nsec", SemanticType(TypeKind.INT, width=64, signed=True)),
    ),
)


class StateDep(str, Enum):
    NEEDS_OPEN_FD = "needs-open-fd"
    NEEDS_MEMORY_REGION = "needs-memory-region"
    NEEDS_THREAD = "needs-thread"
    STATELESS = "stateless"


class ArgDir(str, Enum):
    IN = "in"
    OUT = "out"
    INOUT = "inout"


@dataclass(frozen=True)
class Param:
    name: str
    type: SemanticType
    dir: ArgDir = ArgDir.IN


@dataclass(frozen=True)
class SyscallSpec:
    """Signature of one syscall as shipped in the catalog.

    ``number`` is the host (x86_64) syscall number, used by the process
    tracer to map trap numbers back to catalog entries.  ``hints`` carries
    generator guidance that is not part of the signature proper (resource
    flavor for fd params, cleanup requirements for calls that create
    kernel objects).
    """

    number: int
    name: str
    params: tuple[Param, ...]
    return_type: SemanticType
    state_deps: frozenset[StateDep] = frozenset({StateDep.STATELESS})
    group: str = "core"
    hints: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        names = [p.name for p in self.params]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate param name in {self.name}")
        has_fd = any(_contains_fd(p.type) for p in self.params)
        if has_fd and StateDep.NEEDS_OPEN_FD not in self.state_deps:
            raise ValueError(
                f"{self.name}: file-descriptor param requires needs-open-fd state dep"
            )

    def param(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def hint(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.hints:
            if k == key:
                return v
        return default


def _contains_fd(t: SemanticType) -> bool:
    if t.kind is TypeKind.FD:
        return True
    if t.target is not None and _contains_fd(t.target):
        return True
    return False


# --------------------------------------------------------------------------
# Value trees
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Scalar:
    """Leaf carrying one scalar value. ``tag`` is the semantic kind."""

    value: Union[int, str]
    tag: str = "int"


@dataclass(frozen=True)
class Bytes:
    """Byte-buffer leaf.

    ``data`` holds the full contents only up to BUFFER_INLINE_CAP; longer
    buffers keep (length, prefix, digest) so content changes stay
    detectable without unbounded logs.
    """

    length: int
    prefix: bytes
    digest: str
    data: Optional[bytes] = None

    @classmethod
    def from_data(cls, raw: bytes) -> "Bytes":
        digest = hashlib.sha256(raw).hexdigest()
        if len(raw) <= BUFFER_INLINE_CAP:
            return cls(len(raw), raw[:BUFFER_PREFIX_LEN], digest, raw)
        return cls(len(raw), raw[:BUFFER_PREFIX_LEN], digest, None)

    def same_content(self, other: "Bytes") -> bool:
        return self.length == other.length and self.digest == other.digest


@dataclass(frozen=True)
class Composite:
    """Interior node: a struct, an array, or the argument vector itself."""

    name: str
    children: tuple[tuple[str, "ValueNode"], ...]


@dataclass(frozen=True)
class NullPointer:
    pass


@dataclass(frozen=True)
class Truncated:
    """Placeholder recorded when a dereference was refused or capped."""

    reason: str            # "unreadable-memory" | "depth-cap" | "array-cap"
    address: int = 0


ValueNode = Union[Scalar, Bytes, Composite, NullPointer, Truncated]
LEAF_TYPES = (Scalar, Bytes, NullPointer, Truncated)


# --------------------------------------------------------------------------
# Field paths
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldPath:
    """Address of one leaf inside a value tree, rooted at a parameter name.

    Rendered as e.g. ``fds[0].events``; array indices are integer segments.
    """

    segments: tuple[Union[str, int], ...]

    def __str__(self) -> str:
        out = []
        for seg in self.segments:
            if isinstance(seg, int):
                out.append(f"[{seg}]")
            elif out:
                out.append("." + seg)
            else:
                out.append(seg)
        return "".join(out)

    @classmethod
    def parse(cls, text: str) -> "FieldPath":
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
                segs.append(int(text[i + 1:j]))
                i = j + 1
            else:
                token += c
                i += 1
        if token:
            segs.append(token)
        if not segs:
            raise ValueError(f"empty field path: {text!r}")
        return cls(tuple(segs))

    def child(self, seg: Union[str, int]) -> "FieldPath":
        return FieldPath(self.segments + (seg,))

    @property
    def root(self) -> str:
        return str(self.segments[0])


def path(*segments: Union[str, int]) -> FieldPath:
    return FieldPath(tuple(segments))
