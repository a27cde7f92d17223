"""Process-tracer backend: observe a shim subprocess's real syscalls.

The analogue of a strace-style first-stage interceptor: the shim runs as
a traced child, every forwarded call is announced by an in-band marker,
and the tracer snapshots arguments at syscall entry (through the child's
memory), reads the return at exit, and can actively forge results: it
cancels the syscall at entry (skip-service) or rewrites the return
register and out-parameter memory at exit. Kernel-side records carry the
same schema as the mock backend's.

Requires ptrace permission over the child; a refusal surfaces as
AttachDeniedError naming the facility. x86_64 only.
"""

from __future__ import annotations

import ctypes
import json
import os
import platform
import signal
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import AttachDeniedError, SessionError
from ..harness.records import CallRecord, LogWriter, RetValue
from ..model.encode import encode_value_tree, flatten
from ..model.memory import MemoryAccessError, ProcessMemoryReader
from ..model.registry import SyscallRegistry
from ..model.types import Scalar
from ..shim.policy import RulePath
from ..shim.runner import MARKER_MAGIC, MARKER_SYSCALL
from .control import ControlHandshake
from .mock_backend import resolve_scalar_address
from .mutation import MutationRule, SKIP

PTRACE_TRACEME = 0
PTRACE_PEEKUSER = 3
PTRACE_CONT = 7
PTRACE_GETREGS = 12
PTRACE_SETREGS = 13
PTRACE_SYSCALL = 24
PTRACE_SETOPTIONS = 0x4200
PTRACE_O_TRACESYSGOOD = 0x1
PTRACE_O_EXITKILL = 0x00100000

_ATTACH_DENIED_EXIT = 97

_libc = ctypes.CDLL(None, use_errno=True)
_libc.ptrace.restype = ctypes.c_long
_libc.ptrace.argtypes = [ctypes.c_long, ctypes.c_long, ctypes.c_void_p, ctypes.c_void_p]


class UserRegs(ctypes.Structure):
    _fields_ = [(n, ctypes.c_ulonglong) for n in (
        "r15", "r14", "r13", "r12", "rbp", "rbx", "r11", "r10", "r9", "r8",
        "rax", "rcx", "rdx", "rsi", "rdi", "orig_rax", "rip", "cs", "eflags",
        "rsp", "ss", "fs_base", "gs_base", "ds", "es", "fs", "gs",
    )]

    def syscall_args(self) -> list[int]:
        return [self.rdi, self.rsi, self.rdx, self.r10, self.r8, self.r9]


def ptrace_available() -> bool:
    if platform.machine() != "x86_64":
        return False
    pid = os.fork()
    if pid == 0:
        ok = _libc.ptrace(PTRACE_TRACEME, 0, None, None) == 0
        os._exit(0 if ok else _ATTACH_DENIED_EXIT)
    _, status = os.waitpid(pid, 0)
    if os.WIFSTOPPED(status):
        _libc.ptrace(PTRACE_CONT, pid, None, None)
        os.waitpid(pid, 0)
        return True
    return os.WIFEXITED(status) and os.WEXITSTATUS(status) == 0


def _traceme_or_die():
    if _libc.ptrace(PTRACE_TRACEME, 0, None, None) != 0:
        os._exit(_ATTACH_DENIED_EXIT)


@dataclass
class _InFlight:
    spec: object
    args: list[int]
    args_tree: object
    entry_ns: int
    rule: Optional[MutationRule]
    skipped: bool = False


@dataclass
class TraceOutcome:
    exit_code: Optional[int]
    signal: Optional[int]
    k_records: int
    noise: int
    unmatched_markers: int
    handshake: Optional[ControlHandshake] = None

    @property
    def clean(self) -> bool:
        return self.exit_code == 0


class PtraceTracer:
    def __init__(
        self,
        registry: SyscallRegistry,
        session: str,
        writer: Optional[LogWriter],
        rules: tuple[MutationRule, ...] = (),
    ):
        if platform.machine() != "x86_64":
            raise AttachDeniedError(
                "process tracing requires x86_64 register decoding; "
                f"this host is {platform.machine()}"
            )
        self.registry = registry
        self.session = session
        self.writer = writer
        self.rules = list(rules)
        self._seq = 0

    def install_mutation(self, rule: MutationRule) -> None:
        rule.validate(self.registry)
        self.rules.append(rule)

    # -- main loop ---------------------------------------------------------

    def trace(self, argv: list[str]) -> TraceOutcome:
        proc = subprocess.Popen(
            argv,
            preexec_fn=_traceme_or_die,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
        )
        pid = proc.pid
        _, status = os.waitpid(pid, 0)
        if os.WIFEXITED(status):
            code = os.WEXITSTATUS(status)
            proc.wait()
            if code == _ATTACH_DENIED_EXIT:
                raise AttachDeniedError(
                    "process tracing (ptrace) was denied by the host; required "
                    "facility: ptrace (check kernel.yama.ptrace_scope or CAP_SYS_PTRACE)"
                )
            raise SessionError(f"shim exited during attach (code {code})")
        _libc.ptrace(PTRACE_SETOPTIONS, pid, None,
                     ctypes.c_void_p(PTRACE_O_TRACESYSGOOD | PTRACE_O_EXITKILL))

        os.set_blocking(proc.stdout.fileno(), False)
        stdout_buf = b""
        handshake: Optional[ControlHandshake] = None

        mem = ProcessMemoryReader(pid)
        regs = UserRegs()
        in_syscall = False
        expecting: Optional[tuple[int, int]] = None
        inflight: Optional[_InFlight] = None
        noise = 0
        unmatched_markers = 0
        k_count = 0
        deliver = 0

        while True:
            _libc.ptrace(PTRACE_SYSCALL, pid, None, ctypes.c_void_p(deliver))
            deliver = 0
            _, status = os.waitpid(pid, 0)
            if os.WIFEXITED(status) or os.WIFSIGNALED(status):
                break
            if not os.WIFSTOPPED(status):
                continue
            sig = os.WSTOPSIG(status)
            if sig != (signal.SIGTRAP | 0x80):
                if sig != signal.SIGTRAP:
                    deliver = sig      # forward real signals to the child
                continue
            if handshake is None:
                stdout_buf, handshake = self._pump_handshake(proc, stdout_buf)
            in_syscall = not in_syscall
            if _libc.ptrace(PTRACE_GETREGS, pid, None, ctypes.byref(regs)) != 0:
                continue
            if in_syscall:
                had_marker = expecting is not None
                expecting, inflight, was_noise = self._on_entry(pid, mem, regs, expecting, inflight)
                noise += was_noise
                if had_marker and expecting is not None and was_noise == 0:
                    unmatched_markers += 1   # a fresh marker superseded an unmatched one
            else:
                # strict entry/exit alternation on the lone traced thread:
                # the first stop after a matched entry is that call's exit
                if inflight is not None:
                    self._on_exit(pid, mem, regs, inflight)
                    k_count += 1
                    inflight = None

        exit_code = os.WEXITSTATUS(status) if os.WIFEXITED(status) else None
        termsig = os.WTERMSIG(status) if os.WIFSIGNALED(status) else None
        try:
            rest = proc.stdout.read()
            if rest:
                stdout_buf += rest
        except (OSError, ValueError):
            pass
        proc.wait()
        if handshake is None:
            handshake = self._parse_handshake(stdout_buf)
        if self.writer and (exit_code != 0 or termsig is not None):
            self.writer.write_meta("partial", exit_code=exit_code, signal=termsig)
        return TraceOutcome(exit_code, termsig, k_count, noise, unmatched_markers, handshake)

    # -- entry/exit handling -------------------------------------------------

    def _on_entry(self, pid, mem, regs, expecting, inflight):
        number = ctypes.c_long(regs.orig_rax).value
        args = regs.syscall_args()
        if number == MARKER_SYSCALL and args[0] == MARKER_MAGIC:
            return (args[1], args[2]), inflight, 0
        if expecting is not None and number == expecting[0]:
            try:
                spec = self.registry.lookup_number(number)
            except KeyError:
                return expecting, inflight, 1
            words = args[: len(spec.params)]
            tree = encode_value_tree(spec, words, mem, self.registry)
            rule = self._match_rule(spec.name, tree)
            fl = _InFlight(spec, words, tree, time.monotonic_ns(), rule)
            if rule is not None and rule.serve == SKIP:
                regs.orig_rax = ctypes.c_ulonglong(-1 & 0xFFFFFFFFFFFFFFFF).value
                _libc.ptrace(PTRACE_SETREGS, pid, None, ctypes.byref(regs))
                fl.skipped = True
            return None, fl, 0
        return expecting, inflight, 1

    def _on_exit(self, pid, mem, regs, fl: _InFlight):
        pristine_v = ctypes.c_long(regs.rax).value
        ret = pristine_v
        pristine = RetValue(None if fl.skipped else pristine_v)
        mutated = None
        if fl.rule is not None:
            if fl.rule.return_override is not None:
                ret = fl.rule.return_override
                regs.rax = ctypes.c_ulonglong(ret & 0xFFFFFFFFFFFFFFFF).value
                _libc.ptrace(PTRACE_SETREGS, pid, None, ctypes.byref(regs))
            unwritable = []
            for ptext, value in fl.rule.out_overrides:
                loc = resolve_scalar_address(
                    fl.spec, fl.args, RulePath.parse(ptext), mem, self.registry
                )
                if loc is None:
                    unwritable.append(ptext)
                    continue
                addr, size, _signed = loc
                try:
                    mem.write(addr, (int(value) & ((1 << (size * 8)) - 1)).to_bytes(size, "little"))
                except MemoryAccessError:
                    unwritable.append(ptext)
            if unwritable and self.writer:
                self.writer.write_meta("unwritable-override", name=fl.spec.name, paths=unwritable)
            out_tree = None
            try:
                out_tree = encode_value_tree(fl.spec, fl.args, mem, self.registry)
            except (MemoryAccessError, ValueError):
                pass
            mutated = RetValue(ret, out=out_tree)
        self._seq += 1
        if self.writer is not None:
            self.writer.write_record(CallRecord(
                side="K",
                session=self.session,
                seq=self._seq,
                name=fl.spec.name,
                args=fl.args_tree,
                ret=RetValue(ret),
                time_ns=fl.entry_ns,
                pristine_ret=pristine,
                mutated_ret=mutated,
            ))

    def _match_rule(self, name: str, tree) -> Optional[MutationRule]:
        candidates = [r for r in self.rules if r.spec_name == name]
        if not candidates:
            return None
        flat = {str(p): (n.value if isinstance(n, Scalar) else None) for p, n in flatten(tree)}
        for rule in candidates:
            if rule.matches(flat):
                return rule
        return None

    def _pump_handshake(self, proc, buf: bytes):
        try:
            chunk = proc.stdout.read()
            if chunk:
                buf += chunk
        except (OSError, ValueError):
            pass
        return buf, self._parse_handshake(buf)

    def _parse_handshake(self, buf: bytes) -> Optional[ControlHandshake]:
        for line in buf.decode("utf-8", errors="replace").splitlines():
            line = line.strip()
            if line.startswith("{"):
                try:
                    return ControlHandshake.from_line(line)
                except (ValueError, KeyError):
                    continue
        return None


# ---------------------------------------------------------------------------
# orchestrated traced session
# ---------------------------------------------------------------------------

def trace_stage(
    out_dir: Path,
    tag: str,
    registry: SyscallRegistry,
    session: str,
    catalog_path,
    policy_path,
    plan,
    rules: tuple[MutationRule, ...] = (),
    method: str = "wrapper",
) -> TraceOutcome:
    """Run one traced child for one stage; writes u_/k_ logs into out_dir."""
    from ..fuzz.plan import save_plan

    stage_dir = (out_dir / f"runner_{tag}").resolve()
    stage_dir.mkdir(parents=True, exist_ok=True)
    plan_path = stage_dir / "plan.yaml"
    save_plan(plan, plan_path)
    runner_cfg = {
        "session": session,
        "catalog": str(Path(catalog_path).resolve()) if catalog_path else None,
        "policy": str(Path(policy_path).resolve()),
        "plan": str(plan_path),
        "u_log": "u.log",
        "scratch": str(stage_dir / "scratch"),
        "method": method,
        "markers": True,
    }
    (stage_dir / "runner.json").write_text(json.dumps(runner_cfg, indent=2), encoding="utf-8")

    kw = LogWriter(out_dir / f"k_{tag}.log", session)
    tracer = PtraceTracer(registry, session, kw, rules)
    try:
        outcome = tracer.trace([sys.executable, "-m", "shimprobe.shim.runner",
                                "--dir", str(stage_dir)])
    finally:
        kw.close()
    u_src = stage_dir / "u.log"
    u_dst = out_dir / f"u_{tag}.log"
    if u_src.exists():
        u_dst.write_bytes(u_src.read_bytes())
    else:
        LogWriter(u_dst, session).close()
    return outcome


def run_traced_session(config) -> "SessionManifest":
    from ..orchestrator import drive_session
    from ..session import SessionManifest  # noqa: F401  (return type)

    return drive_session(config, traced=True)
