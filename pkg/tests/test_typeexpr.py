import pytest

from shimprobe.errors import TypeExprError
from shimprobe.model import format_type, parse_type
from shimprobe.model.types import TypeKind


@pytest.mark.parametrize("text,kind", [
    ("i32", TypeKind.INT),
    ("u64", TypeKind.INT),
    ("fd", TypeKind.FD),
    ("path", TypeKind.PATH),
    ("opaque", TypeKind.OPAQUE),
    ("timespec", TypeKind.TIMESPEC),
    ("enum(u32: 0, 1, 2)", TypeKind.ENUM),
    ("flags(u16: 0x1|0x2|0x400)", TypeKind.FLAGS),
    ("buf(len=count)", TypeKind.BUFFER),
    ("buf(16)", TypeKind.BUFFER),
    ("struct(pollfd)", TypeKind.STRUCT),
    ("ptr(timespec)", TypeKind.POINTER),
    ("ptr!(struct(msghdr))", TypeKind.POINTER),
    ("array(struct(pollfd), len=nfds)", TypeKind.ARRAY),
    ("array(i32, 2)", TypeKind.ARRAY),
])
def test_parse_kinds(text, kind):
    assert parse_type(text).kind is kind


def test_int_signedness_and_width():
    t = parse_type("i16")
    assert t.width == 16 and t.signed
    t = parse_type("u8")
    assert t.width == 8 and not t.signed


def test_flags_universe_is_or_of_values():
    t = parse_type("flags(u32: 0x1|0x2|0x400)")
    assert t.universe == 0x403


def test_nullability():
    assert parse_type("ptr(i32)").nullable
    assert not parse_type("ptr!(i32)").nullable


def test_nested_round_trip():
    exprs = [
        "ptr!(array(struct(iovec), len=msg_iovlen))",
        "enum(u32: 0, 1, 2)",
        "buf(len=count)",
        "array(i64, 9)",
        "flags(u16: 0x3ff)",
        "ptr(ptr!(timespec))",
    ]
    for text in exprs:
        t = parse_type(text)
        assert parse_type(format_type(t)) == t


@pytest.mark.parametrize("bad", [
    "",
    "i12",
    "enum(u32:)",          # no values
    "flags(u32: 0x0)",     # zero universe
    "buf(len=)",
    "ptr(i32",             # unbalanced
    "array(i32)",          # missing length
    "i32 trailing",
    "mystery",
])
def test_rejects_malformed(bad):
    with pytest.raises((TypeExprError, ValueError)):
        parse_type(bad)
