"""Shipped syscall catalog access."""

from pathlib import Path

from ..model.registry import SyscallRegistry, load_catalog

DEFAULT_CATALOG = Path(__file__).parent / "syscalls.yaml"


def load_default_catalog() -> SyscallRegistry:
    return load_catalog(DEFAULT_CATALOG)
