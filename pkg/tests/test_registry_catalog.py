import pytest

from shimprobe.catalog import load_default_catalog
from shimprobe.errors import (
    CyclicStructError,
    DuplicateNameError,
    DuplicateNumberError,
    UnresolvedStructError,
)
from shimprobe.model import SyscallRegistry, parse_type
from shimprobe.model.types import Param, StructLayout, SyscallSpec, StateDep
from shimprobe.shim import PRESET_NAMES, load_preset


def _spec(name, number, params=(), state=None):
    return SyscallSpec(
        number=number,
        name=name,
        params=tuple(params),
        return_type=parse_type("i64"),
        state_deps=frozenset(state or {StateDep.STATELESS}),
    )


def test_register_and_lookup_round_trip():
    reg = SyscallRegistry()
    spec = _spec("read", 0, [
        Param("fd", parse_type("fd")),
        Param("buf", parse_type("buf(len=count)")),
        Param("count", parse_type("u64")),
    ], state={StateDep.NEEDS_OPEN_FD})
    reg.register_spec(spec)
    reg.freeze()
    assert reg.lookup("read") is spec
    assert reg.lookup_number(0) is spec


def test_duplicate_name_and_number_rejected():
    reg = SyscallRegistry()
    reg.register_spec(_spec("read", 0))
    with pytest.raises(DuplicateNameError):
        reg.register_spec(_spec("read", 1))
    with pytest.raises(DuplicateNumberError):
        reg.register_spec(_spec("other", 0))


def test_unresolved_struct_rejected():
    reg = SyscallRegistry()
    with pytest.raises(UnresolvedStructError):
        reg.register_spec(_spec("bad", 7, [Param("x", parse_type("ptr(struct(ghost))"))]))


def test_cyclic_struct_rejected():
    reg = SyscallRegistry()
    reg.register_struct(StructLayout("a", (("next", parse_type("ptr(struct(b))")),)))
    reg.register_struct(StructLayout("b", (("back", parse_type("ptr(struct(a))")),)))
    with pytest.raises(CyclicStructError):
        reg.freeze()


def test_fd_param_requires_state_dep():
    with pytest.raises(ValueError):
        _spec("bad", 9, [Param("fd", parse_type("fd"))])   # stateless + fd param


def test_length_ref_must_name_integer_sibling():
    reg = SyscallRegistry()
    from shimprobe.errors import CatalogError

    with pytest.raises(CatalogError):
        reg.register_spec(_spec("bad", 10, [Param("buf", parse_type("buf(len=missing)"))]))


# ---- shipped catalog -------------------------------------------------------

def test_catalog_has_45_specs_in_survey_split(registry):
    specs = registry.specs()
    assert len(specs) == 45
    assert sum(1 for s in specs if s.group == "core") == 35
    assert sum(1 for s in specs if s.group == "extra") == 10


def test_catalog_covers_the_named_calls(registry):
    needed = [
        "open", "close", "read", "write", "pread64", "mmap", "munmap", "mprotect",
        "poll", "sendmsg", "recvmsg", "nanosleep", "futex", "getpid",
        "clock_gettime", "getdents", "connect", "getuid", "sendto",
    ]
    for name in needed:
        assert name in registry, name


def test_catalog_numbers_are_unique_host_numbers(registry):
    numbers = [s.number for s in registry.specs()]
    assert len(numbers) == len(set(numbers))
    assert registry.lookup("read").number == 0
    assert registry.lookup("getpid").number == 39


def test_every_preset_name_resolves_in_registry(registry):
    for preset in PRESET_NAMES:
        policy = load_preset(preset, registry)   # validate() inside
        for name in policy.dispositions:
            assert name in registry


def test_registry_frozen_after_build(registry):
    from shimprobe.errors import CatalogError

    with pytest.raises(CatalogError):
        registry.register_spec(_spec("late", 999))
