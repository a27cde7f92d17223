"""Stateful resource lifecycle: prepare / release around each fuzz cycle.

Stateful syscalls are tested in a stateless fashion: before a cycle the
sandbox opens a valid descriptor, maps a fresh private region (never a
random address, which could corrupt the harness itself), or parks a
helper thread; after the cycle everything is closed, unmapped, and
joined so the next cycle starts from a clean slate.
"""

from __future__ import annotations

import ctypes
import logging
import os
import socket as socket_mod
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import ShimprobeError
from ..model.types import StateDep, SyscallSpec
from .generate import expected_resources

log = logging.getLogger(__name__)


class ResourceExhaustion(ShimprobeError):
    """Raised when a cycle's resources cannot be prepared; campaigns back off."""


@dataclass
class _Thread:
    thread: threading.Thread
    stop: threading.Event


@dataclass
class ResourceSet:
    fds: list[tuple[int, str]] = field(default_factory=list)
    regions: list[tuple[int, int]] = field(default_factory=list)
    threads: list[_Thread] = field(default_factory=list)
    paths: list[str] = field(default_factory=list)
    released: bool = False

    def any_fd(self) -> int:
        return self.fds[0][0] if self.fds else -1

    def region_base(self) -> int:
        return self.regions[0][0] if self.regions else 0

    def region_len(self) -> int:
        return self.regions[0][1] if self.regions else 0

    def scratch_path(self) -> str:
        return self.paths[0] if self.paths else "missing.txt"


def _park_thread() -> _Thread:
    stop = threading.Event()
    t = threading.Thread(target=stop.wait, daemon=True)
    t.start()
    return _Thread(t, stop)


def census_delta(before: dict, after: dict) -> dict:
    return {k: after.get(k, 0) - before.get(k, 0) for k in sorted(set(before) | set(after))}


class MockSandbox:
    """Resource provider backed by a mock kernel's object tables.

    ``mirrors`` are additional kernels (the shim's internal service) that
    adopt each prepared descriptor/region, modeling middleware that tracks
    state for the calls it serves itself.
    """

    def __init__(self, kernel, mirrors: tuple = ()):
        self.kernel = kernel
        self.mirrors = tuple(mirrors)
        self._scratch_counter = 0

    def _mirror_fd(self, fd: int) -> None:
        st = self.kernel.fd_state(fd)
        for k in self.mirrors:
            k.setup_adopt_fd(fd, st)

    def prepare(self, spec: SyscallSpec) -> ResourceSet:
        rs = ResourceSet()
        for kind in sorted(expected_resources(spec)):
            if kind.startswith("fd:"):
                flavor = kind[3:]
                if flavor == "file":
                    if spec.hint("path_from_resource"):
                        self._scratch_counter += 1
                        name = f"scratch_{self._scratch_counter}.txt"
                        self.kernel.setup_file_path(name)
                        rs.paths.append(name)
                        rs.fds.append((self.kernel.setup_open_file(name), "file"))
                    else:
                        rs.fds.append((self.kernel.setup_open_file(), "file"))
                elif flavor == "dir":
                    rs.fds.append((self.kernel.setup_open_dir(), "dir"))
                elif flavor == "socket":
                    rs.fds.append((self.kernel.setup_socket(), "socket"))
                elif flavor == "socket_listening":
                    rs.fds.append((self.kernel.setup_socket(listening=True), "socket"))
                elif flavor == "socket_connected":
                    rs.fds.append((self.kernel.setup_socket(connected=True), "socket"))
                else:
                    raise ResourceExhaustion(f"unknown fd flavor {flavor}")
                self._mirror_fd(rs.fds[-1][0])
            elif kind == "region":
                length = 2 * 4096
                addr = self.kernel.setup_region(length)
                for k in self.mirrors:
                    k.setup_adopt_region(addr, length)
                rs.regions.append((addr, length))
            elif kind == "thread":
                rs.threads.append(_park_thread())
        return rs

    def release(self, rs: ResourceSet) -> None:
        if rs.released:
            log.warning("double release of resource set ignored")
            return
        for fd, _ in rs.fds:
            self.kernel.setup_close(fd)
            for k in self.mirrors:
                k.setup_close(fd)
        for addr, _ in rs.regions:
            self.kernel.setup_free_region(addr)
            for k in self.mirrors:
                k.setup_free_region(addr)
        for th in rs.threads:
            th.stop.set()
            th.thread.join(timeout=5)
        rs.released = True

    def census(self) -> dict:
        return {
            "fds": self.kernel.open_fd_count() + sum(k.open_fd_count() for k in self.mirrors),
            "regions": self.kernel.region_count() + sum(k.region_count() for k in self.mirrors),
            "threads": threading.active_count(),
        }


class RealSandbox:
    """Resource provider backed by the live OS, for subprocess sessions.

    Scratch files live under ``root``; loopback endpoints come from
    socketpair. Regions are raw anonymous mappings made through libc, not
    Python mmap objects, so a fuzzed munmap over the region cannot leave a
    dangling interpreter object behind (release tolerates the double
    unmap).
    """

    def __init__(self, root: Optional[str] = None):
        self.root = Path(root or ".shimprobe-scratch")
        self.root.mkdir(parents=True, exist_ok=True)
        self._scratch_counter = 0
        self._live_maps: dict[int, int] = {}
        self._libc = ctypes.CDLL(None, use_errno=True)
        self._libc.mmap.restype = ctypes.c_void_p
        self._libc.mmap.argtypes = [ctypes.c_void_p, ctypes.c_size_t, ctypes.c_int,
                                    ctypes.c_int, ctypes.c_int, ctypes.c_long]
        self._libc.munmap.argtypes = [ctypes.c_void_p, ctypes.c_size_t]
        self._seed_files()

    def _seed_files(self):
        for name, content in (("exists.txt", b"the quick brown fox\n"),
                              ("data.bin", bytes(range(256))),
                              ("notes.txt", b"reference sandbox file\n")):
            p = self.root / name
            if not p.exists():
                p.write_bytes(content)
        link = self.root / "link.txt"
        if not link.exists():
            try:
                link.symlink_to("exists.txt")
            except OSError:
                pass

    def prepare(self, spec: SyscallSpec) -> ResourceSet:
        rs = ResourceSet()
        try:
            for kind in sorted(expected_resources(spec)):
                if kind.startswith("fd:"):
                    self._prepare_fd(kind[3:], spec, rs)
                elif kind == "region":
                    length = 2 * 4096
                    addr = self._libc.mmap(None, length, 0x3, 0x22, -1, 0)  # RW, PRIVATE|ANON
                    if addr in (None, ctypes.c_void_p(-1).value):
                        raise ResourceExhaustion("mmap failed")
                    self._live_maps[addr] = length
                    rs.regions.append((addr, length))
                elif kind == "thread":
                    rs.threads.append(_park_thread())
        except OSError as exc:
            self.release(rs)
            raise ResourceExhaustion(str(exc)) from exc
        return rs

    def _prepare_fd(self, flavor: str, spec: SyscallSpec, rs: ResourceSet):
        if flavor == "file":
            if spec.hint("path_from_resource"):
                self._scratch_counter += 1
                p = self.root / f"scratch_{self._scratch_counter}.txt"
                p.write_bytes(b"victim")
                rs.paths.append(str(p))
                rs.fds.append((os.open(p, os.O_RDWR), "file"))
            else:
                rs.fds.append((os.open(self.root / "exists.txt", os.O_RDWR), "file"))
        elif flavor == "dir":
            rs.fds.append((os.open(self.root, os.O_RDONLY), "dir"))
        elif flavor == "socket":
            # datagram: connect() just records the peer, so a generated
            # address can never park the harness in a SYN wait
            s = socket_mod.socket(socket_mod.AF_INET, socket_mod.SOCK_DGRAM)
            rs.fds.append((s.detach(), "socket"))
        elif flavor == "socket_listening":
            srv = socket_mod.socket(socket_mod.AF_INET, socket_mod.SOCK_STREAM)
            srv.bind(("127.0.0.1", 0))
            srv.listen(4)
            peer = socket_mod.socket(socket_mod.AF_INET, socket_mod.SOCK_STREAM)
            peer.connect(srv.getsockname())   # queue one connection for accept
            rs.fds.append((srv.detach(), "socket"))
            rs.fds.append((peer.detach(), "socket"))
        elif flavor == "socket_connected":
            a, b = socket_mod.socketpair()
            b.sendall(b"\x5a" * 4096)   # receives must never block
            rs.fds.append((a.detach(), "socket"))
            rs.fds.append((b.detach(), "socket"))
        else:
            raise ResourceExhaustion(f"unknown fd flavor {flavor}")

    def release(self, rs: ResourceSet) -> None:
        if rs.released:
            log.warning("double release of resource set ignored")
            return
        for fd, _ in rs.fds:
            try:
                os.close(fd)
            except OSError:
                log.warning("fd %d already closed", fd)
        for addr, _ in rs.regions:
            length = self._live_maps.pop(addr, None)
            if length is not None:
                # EINVAL from a double unmap (the call under test already
                # unmapped it) is expected and harmless
                self._libc.munmap(addr, length)
        for th in rs.threads:
            th.stop.set()
            th.thread.join(timeout=5)
        for p in rs.paths:
            try:
                os.unlink(p)
            except OSError:
                pass
        rs.released = True

    def census(self) -> dict:
        return {
            "fds": len(os.listdir("/proc/self/fd")),
            "regions": len(self._live_maps),
            "threads": threading.active_count(),
        }
