"""Parser for the compact type expressions used in catalog files.

Grammar (whitespace-insensitive):

    i8|i16|i32|i64|u8|u16|u32|u64     integer, signedness by prefix
    fd                                file descriptor
    path                              NUL-terminated path string
    opaque                            raw 64-bit word
    timespec                          built-in two-field time struct
    enum(u32: 0, 1, 2)                enum with width and allowed values
    flags(u32: 0x1|0x2|0x400)         bit-flag set; universe is the OR
    buf(len=count)                    byte buffer sized by sibling field
    buf(16)                           fixed-size byte buffer
    struct(pollfd)                    reference to a registered layout
    ptr(T) / ptr!(T)                  nullable / non-null pointer to T
    array(T, len=nfds) / array(T, 2)  element sequence, dynamic or fixed
"""

from __future__ import annotations

import re

from ..errors import TypeExprError
from .types import SemanticType, TypeKind

_INT_RE = re.compile(r"^([iu])(8|16|32|64)$")


def parse_type(text: str) -> SemanticType:
    parser = _Parser(text)
    t = parser.parse()
    parser.expect_end()
    return t


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str) -> TypeExprError:
        return TypeExprError(f"{msg} at offset {self.pos} in {self.text!r}")

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def consume(self, ch: str):
        self.skip_ws()
        if not self.text.startswith(ch, self.pos):
            raise self.error(f"expected {ch!r}")
        self.pos += len(ch)

    def word(self) -> str:
        self.skip_ws()
        m = re.match(r"[A-Za-z_][A-Za-z0-9_!]*", self.text[self.pos:])
        if not m:
            raise self.error("expected identifier")
        self.pos += m.end()
        return m.group(0)

    def integer(self) -> int:
        self.skip_ws()
        m = re.match(r"[+-]?(0[xX][0-9a-fA-F]+|0[oO][0-7]+|\d+)", self.text[self.pos:])
        if not m:
            raise self.error("expected integer")
        self.pos += m.end()
        return int(m.group(0), 0)

    def expect_end(self):
        self.skip_ws()
        if self.pos != len(self.text):
            raise self.error("trailing input")

    def parse(self) -> SemanticType:
        w = self.word()
        m = _INT_RE.match(w)
        if m:
            return SemanticType(TypeKind.INT, width=int(m.group(2)), signed=m.group(1) == "i")
        if w == "fd":
            return SemanticType(TypeKind.FD, width=32)
        if w == "path":
            return SemanticType(TypeKind.PATH)
        if w == "opaque":
            return SemanticType(TypeKind.OPAQUE, width=64, signed=False)
        if w == "timespec":
            return SemanticType(TypeKind.TIMESPEC)
        if w == "enum":
            return self._enum()
        if w == "flags":
            return self._flags()
        if w == "buf":
            return self._buf()
        if w == "struct":
            self.consume("(")
            name = self.word()
            self.consume(")")
            return SemanticType(TypeKind.STRUCT, struct_name=name)
        if w in ("ptr", "ptr!"):
            self.consume("(")
            target = self.parse()
            self.consume(")")
            return SemanticType(TypeKind.POINTER, target=target, nullable=(w == "ptr"))
        if w == "array":
            return self._array()
        raise self.error(f"unknown type keyword {w!r}")

    def _width(self) -> tuple[int, bool]:
        w = self.word()
        m = _INT_RE.match(w)
        if not m:
            raise self.error(f"expected width (e.g. u32), got {w!r}")
        return int(m.group(2)), m.group(1) == "i"

    def _enum(self) -> SemanticType:
        self.consume("(")
        width, signed = self._width()
        self.consume(":")
        values = [self.integer()]
        while self.peek() == ",":
            self.consume(",")
            values.append(self.integer())
        self.consume(")")
        return SemanticType(TypeKind.ENUM, width=width, signed=signed, values=tuple(values))

    def _flags(self) -> SemanticType:
        self.consume("(")
        width, signed = self._width()
        self.consume(":")
        universe = self.integer()
        while self.peek() == "|":
            self.consume("|")
            universe |= self.integer()
        self.consume(")")
        return SemanticType(TypeKind.FLAGS, width=width, signed=signed, universe=universe)

    def _buf(self) -> SemanticType:
        self.consume("(")
        if self.peek().isdigit():
            n = self.integer()
            self.consume(")")
            return SemanticType(TypeKind.BUFFER, length=n)
        self.consume("len")
        self.consume("=")
        ref = self.word()
        self.consume(")")
        return SemanticType(TypeKind.BUFFER, len_ref=ref)

    def _array(self) -> SemanticType:
        self.consume("(")
        elem = self.parse()
        self.consume(",")
        if self.peek().isdigit():
            n = self.integer()
            self.consume(")")
            return SemanticType(TypeKind.ARRAY, target=elem, length=n)
        self.consume("len")
        self.consume("=")
        ref = self.word()
        self.consume(")")
        return SemanticType(TypeKind.ARRAY, target=elem, len_ref=ref)


def format_type(t: SemanticType) -> str:
    """Inverse of parse_type, used when writing catalogs back out."""
    k = t.kind
    if k is TypeKind.INT:
        return f"{'i' if t.signed else 'u'}{t.width}"
    if k is TypeKind.FD:
        return "fd"
    if k is TypeKind.PATH:
        return "path"
    if k is TypeKind.OPAQUE:
        return "opaque"
    if k is TypeKind.TIMESPEC:
        return "timespec"
    if k is TypeKind.ENUM:
        vals = ", ".join(str(v) for v in t.values)
        return f"enum({'i' if t.signed else 'u'}{t.width}: {vals})"
    if k is TypeKind.FLAGS:
        return f"flags({'i' if t.signed else 'u'}{t.width}: {hex(t.universe)})"
    if k is TypeKind.BUFFER:
        return f"buf({t.length})" if t.len_ref is None else f"buf(len={t.len_ref})"
    if k is TypeKind.STRUCT:
        return f"struct({t.struct_name})"
    if k is TypeKind.POINTER:
        mark = "" if t.nullable else "!"
        return f"ptr{mark}({format_type(t.target)})"
    if k is TypeKind.ARRAY:
        if t.len_ref is None:
            return f"array({format_type(t.target)}, {t.length})"
        return f"array({format_type(t.target)}, len={t.len_ref})"
    raise TypeExprError(f"unformattable kind {k}")
