"""Address-space accessors used when encoding and realizing value trees.

Three implementations share one protocol: a deterministic in-process
virtual space (mock-kernel sessions and tests), a ctypes-backed local space
(the shim subprocess, where forwarded calls hit the real OS), and a
read/write view of another process through /proc/<pid>/mem (the tracer).
"""

from __future__ import annotations

import ctypes
from typing import Optional, Protocol

from ..errors import MemoryAccessError


class MemoryReader(Protocol):
    def read(self, addr: int, size: int) -> bytes: ...


class MemoryRW(MemoryReader, Protocol):
    def write(self, addr: int, data: bytes) -> None: ...
    def alloc(self, size: int) -> int: ...


class VirtualAddressSpace:
    """Flat dict-backed memory with a deterministic bump allocator.

    Allocation addresses depend only on the allocation sequence, which
    keeps logs byte-stable across runs with the same seed.
    """

    BASE = 0x0000_1000_0000

    def __init__(self, base: int = BASE):
        self._mem: dict[int, int] = {}
        self._next = base
        self._mapped: list[tuple[int, int]] = []

    def alloc(self, size: int) -> int:
        size = max(size, 1)
        addr = self._next
        # 16-byte alignment, one guard slot between allocations
        self._next += (size + 0x1F) & ~0xF
        self._mapped.append((addr, size))
        for i in range(size):
            self._mem.setdefault(addr + i, 0)
        return addr

    def is_mapped(self, addr: int, size: int) -> bool:
        return all((addr + i) in self._mem for i in range(size))

    def read(self, addr: int, size: int) -> bytes:
        if size < 0 or addr < 0:
            raise MemoryAccessError(addr, size)
        try:
            return bytes(self._mem[addr + i] for i in range(size))
        except KeyError:
            raise MemoryAccessError(addr, size) from None

    def write(self, addr: int, data: bytes) -> None:
        if not self.is_mapped(addr, len(data)):
            raise MemoryAccessError(addr, len(data), "unwritable")
        for i, b in enumerate(data):
            self._mem[addr + i] = b


class LocalBufferMemory:
    """Real in-process memory backed by ctypes buffers.

    Used by the shim subprocess so forwarded syscalls receive genuine
    addresses. Buffers are kept alive until reset() so the kernel can
    write out-parameters into them.
    """

    # slack beyond each allocation: defense in depth against any residual
    # layout mismatch between catalog structs and what the host writes
    SLACK = 256

    def __init__(self):
        self._live: list[ctypes.Array] = []

    def alloc(self, size: int) -> int:
        buf = ctypes.create_string_buffer(max(size, 1) + self.SLACK)
        self._live.append(buf)
        return ctypes.addressof(buf)

    def read(self, addr: int, size: int) -> bytes:
        if addr == 0:
            raise MemoryAccessError(addr, size)
        try:
            return ctypes.string_at(addr, size)
        except (OSError, ValueError):
            raise MemoryAccessError(addr, size) from None

    def write(self, addr: int, data: bytes) -> None:
        ctypes.memmove(addr, data, len(data))

    def reset(self) -> None:
        self._live.clear()


class ProcessMemoryReader:
    """Read (and best-effort write) another process's memory.

    Requires the target to be ptrace-stopped; used by the tracer backend
    to snapshot forwarded call arguments and to apply out-parameter
    mutations.
    """

    def __init__(self, pid: int):
        self.pid = pid

    def read(self, addr: int, size: int) -> bytes:
        if addr <= 0 or size < 0:
            raise MemoryAccessError(addr, size)
        try:
            with open(f"/proc/{self.pid}/mem", "rb") as fh:
                fh.seek(addr)
                data = fh.read(size)
        except (OSError, ValueError, OverflowError):
            raise MemoryAccessError(addr, size) from None
        if len(data) != size:
            raise MemoryAccessError(addr, size)
        return data

    def write(self, addr: int, data: bytes) -> None:
        try:
            with open(f"/proc/{self.pid}/mem", "wb") as fh:
                fh.seek(addr)
                fh.write(data)
        except (OSError, ValueError, OverflowError):
            raise MemoryAccessError(addr, len(data), "unwritable") from None

    def alloc(self, size: int) -> int:
        raise MemoryAccessError(0, size, "cannot allocate in a traced process")


def read_c_string(mem: MemoryReader, addr: int, cap: int = 256) -> Optional[str]:
    """NUL-terminated string at addr, or None if unreadable."""
    out = bytearray()
    for i in range(cap):
        try:
            b = mem.read(addr + i, 1)
        except MemoryAccessError:
            if i == 0:
                return None
            break
        if b == b"\x00":
            break
        out += b
    return out.decode("utf-8", errors="replace")
