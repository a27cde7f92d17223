"""Immutable registry of syscall specs and struct layouts.

Built once from a declarative catalog file, validated eagerly, then shared
read-only by every component (generator, harness, interceptor, analyzer).
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Mapping, Optional

import yaml

from ..errors import (
    CatalogError,
    CyclicStructError,
    DuplicateNameError,
    DuplicateNumberError,
    UnresolvedStructError,
)
from .typeexpr import parse_type
from .types import (
    ArgDir,
    Param,
    SemanticType,
    StateDep,
    StructLayout,
    SyscallSpec,
    TypeKind,
)


class SyscallRegistry:
    def __init__(self):
        self._by_name: dict[str, SyscallSpec] = {}
        self._by_number: dict[int, SyscallSpec] = {}
        self._structs: dict[str, StructLayout] = {}
        self._frozen = False
        self.source_digest: Optional[str] = None

    # -- construction -------------------------------------------------

    def register_struct(self, layout: StructLayout) -> None:
        self._check_mutable()
        if layout.name in self._structs:
            raise DuplicateNameError(f"struct {layout.name} already registered")
        self._structs[layout.name] = layout

    def register_spec(self, spec: SyscallSpec) -> None:
        self._check_mutable()
        if spec.name in self._by_name:
            raise DuplicateNameError(f"syscall {spec.name} already registered")
        if spec.number in self._by_number:
            raise DuplicateNumberError(
                f"syscall number {spec.number} already registered "
                f"({self._by_number[spec.number].name})"
            )
        for p in spec.params:
            self._validate_type(spec, p.name, p.type)
        self._validate_len_refs(spec)
        self._by_name[spec.name] = spec
        self._by_number[spec.number] = spec

    def freeze(self) -> "SyscallRegistry":
        self._check_struct_cycles()
        self._frozen = True
        return self

    def _check_mutable(self):
        if self._frozen:
            raise CatalogError("registry is frozen")

    def _validate_type(self, spec: SyscallSpec, where: str, t: SemanticType) -> None:
        if t.kind is TypeKind.STRUCT:
            if t.struct_name not in self._structs:
                raise UnresolvedStructError(
                    f"{spec.name}.{where}: struct {t.struct_name!r} not registered"
                )
        if t.target is not None:
            self._validate_type(spec, where, t.target)

    def _validate_len_refs(self, spec: SyscallSpec) -> None:
        param_names = {p.name: p.type for p in spec.params}

        def check(t: SemanticType, siblings: Mapping[str, SemanticType], where: str):
            if t.len_ref is not None:
                ref = siblings.get(t.len_ref)
                if ref is None:
                    raise CatalogError(
                        f"{spec.name}.{where}: length ref {t.len_ref!r} has no sibling"
                    )
                if ref.kind not in (TypeKind.INT, TypeKind.OPAQUE):
                    raise CatalogError(
                        f"{spec.name}.{where}: length ref {t.len_ref!r} must be integer-kind"
                    )
            if t.kind is TypeKind.STRUCT:
                layout = self._structs[t.struct_name]
                inner = dict(layout.fields)
                for fname, ftype in layout.fields:
                    check(ftype, inner, f"{where}.{fname}")
            if t.target is not None:
                check(t.target, siblings, where)

        for p in spec.params:
            check(p.type, param_names, p.name)

    def _check_struct_cycles(self) -> None:
        # rejects any cycle in the struct-reference graph, including ones
        # through pointers; recursive layouts are out of the catalog's scope
        WHITE, GREY, BLACK = 0, 1, 2
        color = {name: WHITE for name in self._structs}

        def refs(t: SemanticType) -> Iterable[str]:
            if t.kind is TypeKind.STRUCT:
                yield t.struct_name
            if t.target is not None:
                yield from refs(t.target)

        def visit(name: str, chain: list[str]):
            if name not in self._structs:
                raise UnresolvedStructError(f"struct {name!r} not registered")
            if color[name] == GREY:
                raise CyclicStructError(" -> ".join(chain + [name]))
            if color[name] == BLACK:
                return
            color[name] = GREY
            for _, ftype in self._structs[name].fields:
                for ref in refs(ftype):
                    visit(ref, chain + [name])
            color[name] = BLACK

        for name in self._structs:
            visit(name, [])

    # -- lookup ---------------------------------------------------------

    def lookup(self, name: str) -> SyscallSpec:
        return self._by_name[name]

    def lookup_number(self, number: int) -> SyscallSpec:
        return self._by_number[number]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self._by_name)

    def names(self) -> list[str]:
        return list(self._by_name)

    def specs(self) -> list[SyscallSpec]:
        return list(self._by_name.values())

    def numbers(self) -> set[int]:
        return set(self._by_number)

    def struct(self, name: str) -> StructLayout:
        return self._structs[name]

    def struct_names(self) -> list[str]:
        return list(self._structs)


# --------------------------------------------------------------------------
# Catalog file loading
# --------------------------------------------------------------------------

def load_catalog(path) -> SyscallRegistry:
    """Build a frozen registry from a YAML catalog file.

    File shape:

        structs:
          pollfd:
            - [fd, i32]
            - [events, "flags(u16: 0x7)"]
        syscalls:
          - name: read
            number: 0
            params:
              - [fd, fd]
              - [buf, "buf(len=count)", out]
              - [count, u64]
            returns: i64
            state: [needs-open-fd]
            group: core
            hints: {fd_kind: file}
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read()
    doc = yaml.safe_load(raw)
    if not isinstance(doc, dict) or "syscalls" not in doc:
        raise CatalogError(f"{path}: missing 'syscalls' section")

    reg = SyscallRegistry()
    for name, fields in (doc.get("structs") or {}).items():
        parsed = tuple((fname, parse_type(ftext)) for fname, ftext in fields)
        reg.register_struct(StructLayout(name, parsed))

    for entry in doc["syscalls"]:
        reg.register_spec(_spec_from_entry(entry))

    reg.freeze()
    reg.source_digest = hashlib.sha256(raw.encode("utf-8")).hexdigest()
    return reg


def _spec_from_entry(entry: dict) -> SyscallSpec:
    params = []
    for row in entry.get("params", []):
        if len(row) == 2:
            pname, ptext = row
            pdir = ArgDir.IN
        else:
            pname, ptext, pdir = row
            pdir = ArgDir(pdir)
        params.append(Param(pname, parse_type(ptext), pdir))
    state = frozenset(StateDep(s) for s in entry.get("state", ["stateless"]))
    hints = tuple(sorted((str(k), str(v)) for k, v in (entry.get("hints") or {}).items()))
    return SyscallSpec(
        number=int(entry["number"]),
        name=entry["name"],
        params=tuple(params),
        return_type=parse_type(entry.get("returns", "i64")),
        state_deps=state,
        group=entry.get("group", "core"),
        hints=hints,
    )
