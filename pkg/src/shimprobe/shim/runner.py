"""Subprocess shim: the traced target of the process-tracer backend.

Runs the harness and the policy engine inside one child process whose
forwarded calls hit the real OS through a raw syscall thunk. Each
forwarded call is announced with an in-band marker (a deliberately
harmless syscall carrying a magic word, the expected syscall number, and
an ordinal) so the tracer outside can attribute kernel-side events
precisely, the way a control channel pairs the two halves.

Invoked as: python -m shimprobe.shim.runner --dir SESSION_DIR
SESSION_DIR must contain runner.json; the harness-side log is written
into the same directory.
"""

from __future__ import annotations

import argparse
import ctypes
import json
import os
import sys
from pathlib import Path

from ..catalog import load_default_catalog
from ..fuzz.plan import load_plan
from ..fuzz.resources import RealSandbox
from ..harness import Harness, InvocationMethod, LogWriter, run_campaign
from ..interceptor.control import ControlHandshake
from ..kernel.mock import MockKernel, WallClock
from ..model.memory import LocalBufferMemory
from ..model.registry import load_catalog
from ..model.types import SyscallSpec
from .policy import load_policy

MARKER_SYSCALL = 63          # uname with a magic first word; harmless EFAULT
MARKER_MAGIC = 0x5AFE_C0DE_0001

FD_CREATORS = ("open", "openat", "dup", "socket", "accept")


class RawKernel:
    """Kernel gateway that executes forwarded calls for real."""

    def __init__(self, registry, emit_markers: bool = True):
        self.registry = registry
        self.emit_markers = emit_markers
        self._libc = ctypes.CDLL(None, use_errno=True)
        self._libc.syscall.restype = ctypes.c_long
        self._ordinal = 0
        self._cycle_fds: list[int] = []
        self._cycle_maps: list[tuple[int, int]] = []

    def _raw(self, number: int, *args: int) -> int:
        ctypes.set_errno(0)
        argv = [ctypes.c_long(number)] + [
            ctypes.c_long(a & 0xFFFF_FFFF_FFFF_FFFF) for a in args
        ]
        ret = self._libc.syscall(*argv)
        if ret == -1:
            err = ctypes.get_errno()
            if err:
                return -err
        return ret

    def serve(self, spec: SyscallSpec, raw_args: list[int], mem) -> int:
        while len(raw_args) < 6:
            raw_args = raw_args + [0]
        if self.emit_markers:
            self._ordinal += 1
            self._raw(MARKER_SYSCALL, MARKER_MAGIC, spec.number, self._ordinal)
        ret = self._raw(spec.number, *raw_args[:6])
        if ret >= 0:
            if spec.name in FD_CREATORS:
                self._cycle_fds.append(ret)
            elif spec.name == "fcntl" and (raw_args[1] & 0xFFFF_FFFF) == 0:
                self._cycle_fds.append(ret)    # F_DUPFD duplicates
            elif spec.name == "mmap":
                self._cycle_maps.append((ret, raw_args[1]))
            elif spec.name == "pipe" and raw_args[0]:
                try:
                    raw = mem.read(raw_args[0], 8)
                    self._cycle_fds.append(int.from_bytes(raw[:4], "little"))
                    self._cycle_fds.append(int.from_bytes(raw[4:], "little"))
                except Exception:
                    pass
        return ret

    # cycle footprint, mirroring the mock kernel's ledger
    def begin_cycle(self) -> None:
        self._cycle_fds.clear()
        self._cycle_maps.clear()

    def sweep_cycle(self) -> tuple[int, int]:
        closed = 0
        for fd in self._cycle_fds:
            if self._raw(3, fd) == 0:   # close
                closed += 1
        unmapped = 0
        for addr, length in self._cycle_maps:
            if self._raw(11, addr, length) == 0:   # munmap
                unmapped += 1
        self._cycle_fds.clear()
        self._cycle_maps.clear()
        return closed, unmapped


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--dir", required=True)
    opts = ap.parse_args(argv)
    d = Path(opts.dir).resolve()
    cfg = json.loads((d / "runner.json").read_text(encoding="utf-8"))

    registry = load_catalog(cfg["catalog"]) if cfg.get("catalog") else load_default_catalog()
    policy = load_policy(cfg["policy"], registry)
    plan = load_plan(cfg["plan"])
    session = cfg["session"]
    method = InvocationMethod(cfg.get("method", "wrapper"))

    clock = WallClock()
    gateway = RawKernel(registry, emit_markers=cfg.get("markers", True))
    internal = MockKernel(registry, clock, label="internal")
    from .engine import Shim

    shim = Shim(policy, registry, gateway, internal, LocalBufferMemory)
    scratch = Path(cfg.get("scratch") or (d / "scratch")).resolve()
    sandbox = RealSandbox(str(scratch))
    os.chdir(scratch)   # the generated relative paths name the seeded files

    # announce ourselves before any record is produced
    print(ControlHandshake(session, os.getpid()).to_line(), flush=True)

    writer = LogWriter(d / cfg.get("u_log", "u.log"), session)
    harness = Harness(shim, registry, session, writer, clock, LocalBufferMemory)
    try:
        run_campaign(plan, registry, harness, sandbox, kernels=(gateway, internal), method=method)
    finally:
        writer.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
