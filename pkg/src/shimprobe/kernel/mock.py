"""Deterministic in-process syscall service.

Stands in for the benign host OS: behavior is a pure function of
(state, arguments), and time is virtual. Each served call advances a
virtual clock by a configured per-syscall constant (plus the requested
duration for sleeps), which makes call rates computable in closed form
and logs byte-stable across runs.

Returns follow the kernel convention: non-negative on success, -errno on
failure.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import yaml

from ..errors import MemoryAccessError
from ..model.encode import encode_value_tree, struct_size
from ..model.memory import MemoryRW, read_c_string
from ..model.registry import SyscallRegistry
from ..model.types import SyscallSpec


class E:
    """errno values used by the mock service."""

    PERM = 1
    NOENT = 2
    BADF = 9
    AGAIN = 11
    NOMEM = 12
    ACCES = 13
    FAULT = 14
    NOTDIR = 20
    ISDIR = 21
    INVAL = 22
    FBIG = 27
    NOSYS = 38
    NOTSOCK = 88
    DESTADDRREQ = 89
    AFNOSUPPORT = 97
    ISCONN = 106
    NOTCONN = 107
    TIMEDOUT = 110


# Layout constants for the mock address space: apps get mappings from the
# APP range; the reserved range models the middleware's own memory, which
# a crafted mmap return can point into (the classic bad-return probe).
APP_MMAP_BASE = 0x2000_0000_0000
SHIM_RESERVED_BASE = 0x7F50_0000_0000
SHIM_RESERVED_SIZE = 0x0010_0000_0000
PAGE = 4096

DEFAULT_SERVICE_NS = 2000
SKIP_SERVICE_NS = 250
SLEEP_CAP_NS = 10_000_000_000

MOCK_PID = 4242
MOCK_UID = 1000
MOCK_PPID = 1

SEED_FILES = {
    "exists.txt": b"the quick brown fox jumps over the lazy dog\n",
    "data.bin": bytes(range(256)),
    "notes.txt": b"reference sandbox file\n",
}
SEED_SYMLINKS = {"link.txt": "exists.txt"}


class Clock:
    """Virtual nanosecond clock shared by one session."""

    def __init__(self):
        self.now_ns = 0

    def advance(self, ns: int) -> None:
        self.now_ns += max(0, int(ns))


class WallClock:
    """Monotonic real-time clock with the same interface; advance is a
    no-op because real time flows by itself. Used by subprocess sessions
    so harness- and tracer-side timestamps share one clock domain."""

    @property
    def now_ns(self) -> int:
        import time

        return time.monotonic_ns()

    def advance(self, ns: int) -> None:
        pass


def load_service_times(path=None) -> dict:
    if path is None:
        path = Path(__file__).parent.parent / "data" / "service_times.yaml"
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    return {
        "default": int(doc.get("default", DEFAULT_SERVICE_NS)),
        "skip": int(doc.get("skip", SKIP_SERVICE_NS)),
        "per": {str(k): int(v) for k, v in (doc.get("per") or {}).items()},
    }


@dataclass
class KernelResult:
    value: int
    svc_ns: int


@dataclass
class _Fd:
    kind: str                    # file | dir | socket | pipe_r | pipe_w
    name: str = ""
    offset: int = 0
    flags: int = 0
    bound: bool = False
    listening: bool = False
    connected: bool = False
    peer: tuple[int, int] = (0, 0)


class MockKernel:
    def __init__(
        self,
        registry: SyscallRegistry,
        clock: Optional[Clock] = None,
        service_times: Optional[dict] = None,
        label: str = "kernel",
    ):
        self.registry = registry
        self.clock = clock or Clock()
        self.label = label
        st = service_times or load_service_times()
        self._svc_default = st["default"]
        self._svc = dict(st["per"])
        self.skip_ns = st["skip"]

        self._files: dict[str, bytearray] = {k: bytearray(v) for k, v in SEED_FILES.items()}
        self._symlinks = dict(SEED_SYMLINKS)
        self._fds: dict[int, _Fd] = {}
        self._next_fd = 3
        self._regions: dict[int, int] = {}
        self._next_region = APP_MMAP_BASE
        self._brk = 0x0100_0000
        self._rand_counter = 0
        self._accept_port = 40000
        self._cycle_fds: list[int] = []
        self._cycle_regions: list[int] = []

        self._handlers: dict[str, Callable] = {
            name[4:]: getattr(self, name)
            for name in dir(self)
            if name.startswith("_do_")
        }
        from ..model.encode import field_offset

        self._msg_flags_off = field_offset(registry.struct("msghdr"), "msg_flags", registry)

    # ------------------------------------------------------------------
    # public service interface
    # ------------------------------------------------------------------

    def serve(self, spec: SyscallSpec, raw_args: list[int], mem: MemoryRW) -> KernelResult:
        handler = self._handlers.get(spec.name)
        if handler is None:
            res = KernelResult(-E.NOSYS, self._svc_default)
        else:
            try:
                value, extra = handler(raw_args, mem)
            except MemoryAccessError:
                value, extra = -E.FAULT, 0
            res = KernelResult(value, self.service_time(spec.name) + extra)
        # every service must advance the clock: kernel-side record times
        # are what makes call-window attribution exact
        res.svc_ns = max(1, res.svc_ns)
        self.clock.advance(res.svc_ns)
        return res

    def service_time(self, name: str) -> int:
        return self._svc.get(name, self._svc_default)

    # census and per-cycle footprint ledger -----------------------------

    def open_fd_count(self) -> int:
        return len(self._fds)

    def region_count(self) -> int:
        return len(self._regions)

    def begin_cycle(self) -> None:
        self._cycle_fds.clear()
        self._cycle_regions.clear()

    def sweep_cycle(self) -> tuple[int, int]:
        """Close kernel objects created during this cycle (footprint cleanup)."""
        swept_fds = 0
        for fd in self._cycle_fds:
            if fd in self._fds:
                del self._fds[fd]
                swept_fds += 1
        swept_regions = 0
        for addr in self._cycle_regions:
            if addr in self._regions:
                del self._regions[addr]
                swept_regions += 1
        self._cycle_fds.clear()
        self._cycle_regions.clear()
        return swept_fds, swept_regions

    # trusted setup path used by the sandbox to prepare resources -------

    def setup_open_file(self, name: str = "exists.txt") -> int:
        if name not in self._files:
            self._files[name] = bytearray(b"scratch")
        return self._alloc_fd(_Fd("file", name))

    def setup_open_dir(self) -> int:
        return self._alloc_fd(_Fd("dir", "."))

    def setup_socket(self, *, listening: bool = False, connected: bool = False) -> int:
        fd = self._alloc_fd(_Fd("socket"))
        st = self._fds[fd]
        st.bound = listening
        st.listening = listening
        st.connected = connected
        if connected:
            st.peer = (0x7F000001, self._bump_port())
        return fd

    def setup_region(self, length: int = PAGE) -> int:
        return self._alloc_region(length)

    def setup_file_path(self, name: str, content: bytes = b"victim") -> str:
        self._files[name] = bytearray(content)
        return name

    def setup_adopt_fd(self, fd: int, like: "_Fd") -> None:
        """Mirror a descriptor prepared in another kernel's table.

        Models middleware that tracks descriptors it has seen, so calls it
        serves internally can resolve them.
        """
        self._fds[fd] = _Fd(like.kind, like.name, like.offset, like.flags,
                            like.bound, like.listening, like.connected, like.peer)
        self._next_fd = max(self._next_fd, fd + 1)
        if like.kind == "file" and like.name and like.name not in self._files:
            self._files[like.name] = bytearray(b"victim")

    def setup_adopt_region(self, addr: int, length: int) -> None:
        self._regions[addr] = length

    def fd_state(self, fd: int) -> Optional[_Fd]:
        return self._fds.get(fd)

    def setup_close(self, fd: int) -> bool:
        return self._fds.pop(fd, None) is not None

    def setup_free_region(self, addr: int) -> bool:
        return self._regions.pop(addr, None) is not None

    def has_fd(self, fd: int) -> bool:
        return fd in self._fds

    def has_region(self, addr: int) -> bool:
        return addr in self._regions

    # ------------------------------------------------------------------
    # internals
    # ------------------------------------------------------------------

    def _alloc_fd(self, st: _Fd) -> int:
        fd = self._next_fd
        self._next_fd += 1
        self._fds[fd] = st
        self._cycle_fds.append(fd)
        return fd

    def _alloc_region(self, length: int) -> int:
        length = max(PAGE, (length + PAGE - 1) & ~(PAGE - 1))
        addr = self._next_region
        self._next_region += length + PAGE
        self._regions[addr] = length
        self._cycle_regions.append(addr)
        return addr

    def _bump_port(self) -> int:
        self._accept_port += 1
        return self._accept_port

    @staticmethod
    def _sfd(word: int) -> int:
        fd = word & 0xFFFF_FFFF
        return fd - (1 << 32) if fd >= (1 << 31) else fd

    def _file_fd(self, word: int) -> Optional[_Fd]:
        st = self._fds.get(self._sfd(word))
        return st if st is not None and st.kind == "file" else None

    def _read_struct(self, mem, addr: int, name: str) -> Optional[dict]:
        from ..model.encode import _field_size

        layout = self.registry.struct(name)
        try:
            raw = mem.read(addr, struct_size(layout, self.registry))
        except MemoryAccessError:
            return None
        out, off = {}, 0
        for fname, ftype in layout.fields:
            size = _field_size(ftype, self.registry)
            out[fname] = int.from_bytes(raw[off:off + min(size, 8)], "little")
            off += size
        return out

    def _pattern(self, n: int) -> bytes:
        self._rand_counter += 1
        seed = self._rand_counter.to_bytes(8, "little")
        out = bytearray()
        while len(out) < n:
            out += hashlib.sha256(seed + len(out).to_bytes(4, "little")).digest()
        return bytes(out[:n])

    def _write_timespec(self, mem, addr: int, sec: int, nsec: int) -> bool:
        try:
            mem.write(addr, sec.to_bytes(8, "little", signed=True)
                      + nsec.to_bytes(8, "little", signed=True))
            return True
        except MemoryAccessError:
            return False

    # ------------------------------------------------------------------
    # handlers: (raw_args, mem) -> (return_value, extra_service_ns)
    # ------------------------------------------------------------------

    # ----- file -----

    def _do_open(self, a, mem):
        path = read_c_string(mem, a[0]) if a[0] else None
        if path is None:
            return -E.FAULT, 0
        flags = a[1] & 0xFFFF_FFFF
        if path in self._symlinks:
            path = self._symlinks[path]
        if path not in self._files:
            if flags & 0x40:  # O_CREAT
                self._files[path] = bytearray()
            else:
                return -E.NOENT, 0
        if flags & 0x200:  # O_TRUNC
            self._files[path] = bytearray()
        return self._alloc_fd(_Fd("file", path, flags=flags)), 0

    def _do_openat(self, a, mem):
        dirfd = self._sfd(a[0])
        if dirfd != -100 and dirfd not in self._fds:
            return -E.BADF, 0
        return self._do_open(a[1:], mem)

    def _do_close(self, a, mem):
        fd = self._sfd(a[0])
        if fd not in self._fds:
            return -E.BADF, 0
        del self._fds[fd]
        return 0, 0

    def _do_read(self, a, mem):
        st = self._fds.get(self._sfd(a[0]))
        if st is None:
            return -E.BADF, 0
        if st.kind == "dir":
            return -E.ISDIR, 0
        count = min(a[2], 8192)
        if st.kind == "file":
            data = bytes(self._files.get(st.name, b""))[st.offset:st.offset + count]
        elif st.kind in ("socket", "pipe_r"):
            if st.kind == "socket" and not st.connected:
                return -E.NOTCONN, 0
            data = self._pattern(min(count, 64))
        else:
            return -E.BADF, 0
        if count and data:
            try:
                mem.write(a[1], data)
            except MemoryAccessError:
                return -E.FAULT, 0
        if st.kind == "file":
            st.offset += len(data)
        return len(data), 0

    def _do_write(self, a, mem):
        st = self._fds.get(self._sfd(a[0]))
        if st is None:
            return -E.BADF, 0
        count = min(a[2], 8192)
        try:
            data = mem.read(a[1], count) if count else b""
        except MemoryAccessError:
            return -E.FAULT, 0
        if st.kind == "file":
            content = self._files.setdefault(st.name, bytearray())
            end = st.offset + len(data)
            if end > len(content):
                content.extend(b"\x00" * (end - len(content)))
            content[st.offset:end] = data
            st.offset = end
        elif st.kind == "socket" and not st.connected:
            return -E.NOTCONN, 0
        elif st.kind == "dir":
            return -E.ISDIR, 0
        return len(data), 0

    def _do_pread64(self, a, mem):
        st = self._file_fd(a[0])
        if st is None:
            return -E.BADF, 0
        offset = a[3] if a[3] < (1 << 63) else a[3] - (1 << 64)
        if offset < 0:
            return -E.INVAL, 0
        count = min(a[2], 8192)
        data = bytes(self._files.get(st.name, b""))[offset:offset + count]
        if data:
            try:
                mem.write(a[1], data)
            except MemoryAccessError:
                return -E.FAULT, 0
        return len(data), 0

    def _do_pwrite64(self, a, mem):
        st = self._file_fd(a[0])
        if st is None:
            return -E.BADF, 0
        offset = a[3] if a[3] < (1 << 63) else a[3] - (1 << 64)
        if offset < 0 or offset > (1 << 20):
            return -E.INVAL, 0
        count = min(a[2], 8192)
        try:
            data = mem.read(a[1], count) if count else b""
        except MemoryAccessError:
            return -E.FAULT, 0
        content = self._files.setdefault(st.name, bytearray())
        end = offset + len(data)
        if end > len(content):
            content.extend(b"\x00" * (end - len(content)))
        content[offset:end] = data
        return len(data), 0

    def _do_lseek(self, a, mem):
        st = self._file_fd(a[0])
        if st is None:
            return -E.BADF, 0
        offset = a[1] if a[1] < (1 << 63) else a[1] - (1 << 64)
        whence = a[2] & 0xFFFF_FFFF
        size = len(self._files.get(st.name, b""))
        base = {0: 0, 1: st.offset, 2: size}.get(whence)
        if base is None:
            return -E.INVAL, 0
        pos = base + offset
        if pos < 0:
            return -E.INVAL, 0
        st.offset = pos
        return pos, 0

    def _do_stat(self, a, mem):
        path = read_c_string(mem, a[0]) if a[0] else None
        if path is None:
            return -E.FAULT, 0
        if path in self._symlinks:
            path = self._symlinks[path]
        if path == "." :
            return (0 if self._write_stat(mem, a[1], 0o040755, 0) else -E.FAULT), 0
        if path not in self._files:
            return -E.NOENT, 0
        ok = self._write_stat(mem, a[1], 0o100644, len(self._files[path]), path)
        return (0 if ok else -E.FAULT), 0

    def _do_fstat(self, a, mem):
        st = self._fds.get(self._sfd(a[0]))
        if st is None:
            return -E.BADF, 0
        if st.kind == "file":
            ok = self._write_stat(mem, a[1], 0o100644, len(self._files.get(st.name, b"")), st.name)
        elif st.kind == "dir":
            ok = self._write_stat(mem, a[1], 0o040755, 0)
        else:
            ok = self._write_stat(mem, a[1], 0o140777, 0)
        return (0 if ok else -E.FAULT), 0

    def _write_stat(self, mem, addr: int, mode: int, size: int, name: str = "") -> bool:
        ino = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
        fields = [
            (8, 1),            # st_dev
            (8, ino),          # st_ino
            (8, 1),            # st_nlink
            (4, mode),         # st_mode
            (4, MOCK_UID),     # st_uid
            (4, MOCK_UID),     # st_gid
            (4, 0),            # pad
            (8, 0),            # st_rdev
            (8, size),         # st_size
            (8, 4096),         # st_blksize
            (8, (size + 511) // 512),  # st_blocks
        ]
        raw = b"".join(v.to_bytes(w, "little") for w, v in fields)
        raw += b"\x00" * 72    # timestamps and reserved words
        try:
            mem.write(addr, raw)
            return True
        except MemoryAccessError:
            return False

    def _do_access(self, a, mem):
        path = read_c_string(mem, a[0]) if a[0] else None
        if path is None:
            return -E.FAULT, 0
        if path in self._symlinks:
            path = self._symlinks[path]
        return (0 if path in self._files or path == "." else -E.NOENT), 0

    def _do_dup(self, a, mem):
        fd = self._sfd(a[0])
        st = self._fds.get(fd)
        if st is None:
            return -E.BADF, 0
        return self._alloc_fd(_Fd(st.kind, st.name, st.offset, st.flags)), 0

    def _do_fcntl(self, a, mem):
        fd = self._sfd(a[0])
        st = self._fds.get(fd)
        if st is None:
            return -E.BADF, 0
        cmd = a[1] & 0xFFFF_FFFF
        if cmd == 0:   # F_DUPFD
            return self._alloc_fd(_Fd(st.kind, st.name, st.offset, st.flags)), 0
        if cmd == 1:   # F_GETFD
            return 0, 0
        if cmd == 2:   # F_SETFD
            return 0, 0
        if cmd == 3:   # F_GETFL
            return st.flags, 0
        if cmd == 4:   # F_SETFL
            st.flags = a[2] & 0xFFFF_FFFF
            return 0, 0
        return -E.INVAL, 0

    def _do_ftruncate(self, a, mem):
        st = self._file_fd(a[0])
        if st is None:
            return -E.BADF, 0
        length = a[1]
        if length > (1 << 20):
            return -E.FBIG, 0
        content = self._files.setdefault(st.name, bytearray())
        if length <= len(content):
            del content[length:]
        else:
            content.extend(b"\x00" * (length - len(content)))
        return 0, 0

    def _do_getdents(self, a, mem):
        st = self._fds.get(self._sfd(a[0]))
        if st is None:
            return -E.BADF, 0
        if st.kind != "dir":
            return -E.NOTDIR, 0
        if st.offset:
            return 0, 0   # one-shot listing, then EOF
        out = bytearray()
        for name in sorted(self._files):
            rec = bytearray()
            ino = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
            nm = name.encode() + b"\x00"
            reclen = 8 + 2 + len(nm)
            rec += ino.to_bytes(8, "little")
            rec += reclen.to_bytes(2, "little")
            rec += nm
            out += rec
        count = min(a[2], 8192)
        data = bytes(out[:count])
        if data:
            try:
                mem.write(a[1], data)
            except MemoryAccessError:
                return -E.FAULT, 0
        st.offset = 1
        return len(data), 0

    def _do_unlink(self, a, mem):
        path = read_c_string(mem, a[0]) if a[0] else None
        if path is None:
            return -E.FAULT, 0
        if path not in self._files:
            return -E.NOENT, 0
        del self._files[path]
        return 0, 0

    def _do_readlink(self, a, mem):
        path = read_c_string(mem, a[0]) if a[0] else None
        if path is None:
            return -E.FAULT, 0
        target = self._symlinks.get(path)
        if target is None:
            return (-E.NOENT if path not in self._files else -E.INVAL), 0
        data = target.encode()[: min(a[2], 8192)]
        if data:
            try:
                mem.write(a[1], data)
            except MemoryAccessError:
                return -E.FAULT, 0
        return len(data), 0

    # ----- memory -----

    def _do_mmap(self, a, mem):
        length = a[1]
        if length == 0:
            return -E.INVAL, 0
        if length > (1 << 30):
            return -E.NOMEM, 0
        flags = a[3] & 0xFFFF_FFFF
        fd = self._sfd(a[4])
        anonymous = bool(flags & 0x20) or fd == -1
        if not anonymous and self._fds.get(fd) is None:
            return -E.BADF, 0
        return self._alloc_region(length), 0

    def _do_munmap(self, a, mem):
        addr = a[0]
        if addr not in self._regions:
            return -E.INVAL, 0
        del self._regions[addr]
        return 0, 0

    def _do_mprotect(self, a, mem):
        if a[0] not in self._regions:
            return -E.NOMEM, 0
        prot = a[2] & 0xFFFF_FFFF
        if prot & ~0x7:
            return -E.INVAL, 0
        return 0, 0

    def _do_madvise(self, a, mem):
        if a[0] not in self._regions:
            return -E.NOMEM, 0
        if (a[2] & 0xFFFF_FFFF) > 4:
            return -E.INVAL, 0
        return 0, 0

    def _do_brk(self, a, mem):
        addr = a[0]
        if 0 < addr < (1 << 40):
            self._brk = addr
        return self._brk, 0

    # ----- network -----

    def _do_socket(self, a, mem):
        domain = a[0] & 0xFFFF_FFFF
        if domain not in (1, 2, 10):
            return -E.AFNOSUPPORT, 0
        if (a[1] & 0xFF) not in (1, 2):
            return -E.INVAL, 0
        return self._alloc_fd(_Fd("socket")), 0

    def _sock(self, word: int) -> Optional[_Fd]:
        st = self._fds.get(self._sfd(word))
        return st if st is not None and st.kind == "socket" else None

    def _do_connect(self, a, mem):
        st = self._fds.get(self._sfd(a[0]))
        if st is None:
            return -E.BADF, 0
        if st.kind != "socket":
            return -E.NOTSOCK, 0
        if st.connected:
            return -E.ISCONN, 0
        sa = self._read_struct(mem, a[1], "sockaddr_in") if a[1] else None
        if sa is None:
            return -E.FAULT, 0
        if sa["sin_family"] not in (1, 2, 10):
            return -E.AFNOSUPPORT, 0
        st.connected = True
        st.peer = (sa["sin_addr"], sa["sin_port"])
        return 0, 0

    def _do_bind(self, a, mem):
        st = self._fds.get(self._sfd(a[0]))
        if st is None:
            return -E.BADF, 0
        if st.kind != "socket":
            return -E.NOTSOCK, 0
        sa = self._read_struct(mem, a[1], "sockaddr_in") if a[1] else None
        if sa is None:
            return -E.FAULT, 0
        st.bound = True
        return 0, 0

    def _do_listen(self, a, mem):
        st = self._fds.get(self._sfd(a[0]))
        if st is None:
            return -E.BADF, 0
        if st.kind != "socket":
            return -E.NOTSOCK, 0
        st.listening = True
        return 0, 0

    def _do_accept(self, a, mem):
        st = self._fds.get(self._sfd(a[0]))
        if st is None:
            return -E.BADF, 0
        if st.kind != "socket":
            return -E.NOTSOCK, 0
        if not st.listening:
            return -E.INVAL, 0
        port = self._bump_port()
        fd = self._alloc_fd(_Fd("socket"))
        self._fds[fd].connected = True
        self._fds[fd].peer = (0x7F000001, port)
        if a[1]:
            raw = ((2).to_bytes(2, "little") + port.to_bytes(2, "little")
                   + (0x7F000001).to_bytes(4, "little") + b"\x00" * 8)
            try:
                mem.write(a[1], raw)
            except MemoryAccessError:
                return -E.FAULT, 0
        if a[2]:
            try:
                mem.write(a[2], (16).to_bytes(4, "little"))
            except MemoryAccessError:
                return -E.FAULT, 0
        return fd, 0

    def _do_sendto(self, a, mem):
        st = self._sock(a[0])
        if st is None:
            return (-E.BADF if self._fds.get(self._sfd(a[0])) is None else -E.NOTSOCK), 0
        if not st.connected and not a[4]:
            return -E.DESTADDRREQ, 0
        count = min(a[2], 8192)
        try:
            mem.read(a[1], count) if count else b""
        except MemoryAccessError:
            return -E.FAULT, 0
        return count, 0

    def _do_recvfrom(self, a, mem):
        st = self._sock(a[0])
        if st is None:
            return (-E.BADF if self._fds.get(self._sfd(a[0])) is None else -E.NOTSOCK), 0
        if not st.connected:
            return -E.NOTCONN, 0
        n = min(a[2], 64)
        data = self._pattern(n)
        if n:
            try:
                mem.write(a[1], data)
            except MemoryAccessError:
                return -E.FAULT, 0
        if a[4]:
            raw = ((2).to_bytes(2, "little") + st.peer[1].to_bytes(2, "little")
                   + st.peer[0].to_bytes(4, "little") + b"\x00" * 8)
            try:
                mem.write(a[4], raw)
            except MemoryAccessError:
                return -E.FAULT, 0
        if a[5]:
            try:
                mem.write(a[5], (16).to_bytes(4, "little"))
            except MemoryAccessError:
                pass
        return n, 0

    def _iovec_spans(self, mem, msg: dict) -> Optional[list[tuple[int, int]]]:
        niov = min(msg["msg_iovlen"], 8)
        base = msg["msg_iov"]
        if base == 0:
            return []
        spans = []
        for i in range(niov):
            try:
                raw = mem.read(base + i * 16, 16)
            except MemoryAccessError:
                return None
            spans.append((int.from_bytes(raw[:8], "little"),
                          int.from_bytes(raw[8:16], "little")))
        return spans

    def _do_sendmsg(self, a, mem):
        st = self._sock(a[0])
        if st is None:
            return (-E.BADF if self._fds.get(self._sfd(a[0])) is None else -E.NOTSOCK), 0
        if not st.connected:
            return -E.NOTCONN, 0
        msg = self._read_struct(mem, a[1], "msghdr") if a[1] else None
        if msg is None:
            return -E.FAULT, 0
        spans = self._iovec_spans(mem, msg)
        if spans is None:
            return -E.FAULT, 0
        total = 0
        for base, ln in spans:
            ln = min(ln, 8192)
            if base and ln:
                try:
                    mem.read(base, ln)
                except MemoryAccessError:
                    return -E.FAULT, 0
            total += ln
        return total, 0

    def _do_recvmsg(self, a, mem):
        st = self._sock(a[0])
        if st is None:
            return (-E.BADF if self._fds.get(self._sfd(a[0])) is None else -E.NOTSOCK), 0
        if not st.connected:
            return -E.NOTCONN, 0
        msg = self._read_struct(mem, a[1], "msghdr") if a[1] else None
        if msg is None:
            return -E.FAULT, 0
        spans = self._iovec_spans(mem, msg)
        if spans is None:
            return -E.FAULT, 0
        total = 0
        for base, ln in spans:
            ln = min(ln, 64)
            if base and ln:
                try:
                    mem.write(base, self._pattern(ln))
                except MemoryAccessError:
                    return -E.FAULT, 0
            total += ln
        try:
            mem.write(a[1] + self._msg_flags_off, (0).to_bytes(4, "little"))
        except MemoryAccessError:
            pass
        return total, 0

    def _do_shutdown(self, a, mem):
        st = self._sock(a[0])
        if st is None:
            return (-E.BADF if self._fds.get(self._sfd(a[0])) is None else -E.NOTSOCK), 0
        if (a[1] & 0xFFFF_FFFF) > 2:
            return -E.INVAL, 0
        if not st.connected:
            return -E.NOTCONN, 0
        return 0, 0

    # ----- time -----

    def _read_timespec(self, mem, addr: int) -> Optional[tuple[int, int]]:
        try:
            raw = mem.read(addr, 16)
        except MemoryAccessError:
            return None
        sec = int.from_bytes(raw[:8], "little", signed=True)
        nsec = int.from_bytes(raw[8:], "little", signed=True)
        return sec, nsec

    def _sleep(self, mem, req_addr: int, rem_addr: int):
        if req_addr == 0:
            return -E.FAULT, 0
        ts = self._read_timespec(mem, req_addr)
        if ts is None:
            return -E.FAULT, 0
        sec, nsec = ts
        if sec < 0 or nsec < 0 or nsec >= 1_000_000_000:
            return -E.INVAL, 0
        dur = min(sec * 1_000_000_000 + nsec, SLEEP_CAP_NS)
        if rem_addr:
            self._write_timespec(mem, rem_addr, 0, 0)
        return 0, dur

    def _do_nanosleep(self, a, mem):
        return self._sleep(mem, a[0], a[1])

    def _do_clock_nanosleep(self, a, mem):
        if (a[0] & 0xFFFF_FFFF) > 11:
            return -E.INVAL, 0
        return self._sleep(mem, a[2], a[3])

    def _do_clock_gettime(self, a, mem):
        if (a[0] & 0xFFFF_FFFF) not in (0, 1, 4):
            return -E.INVAL, 0
        if a[1] == 0:
            return -E.FAULT, 0
        ok = self._write_timespec(mem, a[1], self.clock.now_ns // 1_000_000_000,
                                  self.clock.now_ns % 1_000_000_000)
        return (0 if ok else -E.FAULT), 0

    def _do_gettimeofday(self, a, mem):
        if a[0]:
            try:
                mem.write(a[0], (self.clock.now_ns // 1_000_000_000).to_bytes(8, "little")
                          + ((self.clock.now_ns % 1_000_000_000) // 1000).to_bytes(8, "little"))
            except MemoryAccessError:
                return -E.FAULT, 0
        return 0, 0

    # ----- process / misc -----

    def _do_getpid(self, a, mem):
        return MOCK_PID, 0

    def _do_gettid(self, a, mem):
        return MOCK_PID, 0

    def _do_getuid(self, a, mem):
        return MOCK_UID, 0

    def _do_getppid(self, a, mem):
        return MOCK_PPID, 0

    def _do_sched_yield(self, a, mem):
        return 0, 0

    def _do_futex(self, a, mem):
        if a[0] == 0:
            return -E.FAULT, 0
        try:
            word = int.from_bytes(mem.read(a[0], 4), "little")
        except MemoryAccessError:
            return -E.FAULT, 0
        op = a[1] & 0x7F
        if op == 0:     # WAIT
            if word != (a[2] & 0xFFFF_FFFF):
                return -E.AGAIN, 0
            extra = 1000
            if a[3]:
                ts = self._read_timespec(mem, a[3])
                if ts is not None and ts[0] >= 0 and 0 <= ts[1] < 1_000_000_000:
                    extra = min(ts[0] * 1_000_000_000 + ts[1], SLEEP_CAP_NS)
            return 0, extra
        if op == 1:     # WAKE
            return 0, 0
        return -E.INVAL, 0

    def _do_pipe(self, a, mem):
        if a[0] == 0:
            return -E.FAULT, 0
        r = self._alloc_fd(_Fd("pipe_r"))
        w = self._alloc_fd(_Fd("pipe_w"))
        try:
            mem.write(a[0], r.to_bytes(4, "little") + w.to_bytes(4, "little"))
        except MemoryAccessError:
            del self._fds[r]
            del self._fds[w]
            return -E.FAULT, 0
        return 0, 0

    def _do_poll(self, a, mem):
        nfds = a[1]
        if nfds > 1024:
            return -E.INVAL, 0
        if nfds == 0:
            return 0, 0
        if a[0] == 0:
            return -E.FAULT, 0
        ready = 0
        for i in range(min(nfds, 64)):
            base = a[0] + i * 8
            try:
                raw = mem.read(base, 8)
            except MemoryAccessError:
                return -E.FAULT, 0
            fd = int.from_bytes(raw[:4], "little", signed=True)
            events = int.from_bytes(raw[4:6], "little")
            if fd in self._fds:
                revents = events & 0x5   # POLLIN|POLLOUT as immediately ready
            else:
                revents = 0x20           # POLLNVAL
            if revents:
                ready += 1
            try:
                mem.write(base + 6, revents.to_bytes(2, "little"))
            except MemoryAccessError:
                return -E.FAULT, 0
        return ready, 0

    def _do_getrandom(self, a, mem):
        n = min(a[1], 256)
        if n and a[0] == 0:
            return -E.FAULT, 0
        if n:
            try:
                mem.write(a[0], self._pattern(n))
            except MemoryAccessError:
                return -E.FAULT, 0
        return n, 0
