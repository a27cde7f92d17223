"""Execution simulator: the independent soundness oracle.

Runs a program under a step budget and records every store address,
stack-pointer write, and opcode executed. An out-of-bounds store,
out-of-bounds stack-pointer value, or forbidden opcode in the trace of a
verifier-accepted program is a verifier soundness bug by definition.

Call/return and push/pop use shadow stacks rather than data memory, so
the store events in the trace are the complete set of memory writes.
Indirect jumps interpret the register value as an instruction index; a
target outside the program is recorded and stops execution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .isa import Addr, Bounds, BoundsPolicy, Instr, SfiProgram, bounds_for

MASK64 = (1 << 64) - 1


@dataclass
class Trace:
    events: list[tuple] = field(default_factory=list)
    truncated: bool = False
    steps: int = 0

    def stores(self) -> list[tuple[int, bool]]:
        return [(e[1], e[3]) for e in self.events if e[0] == "store"]

    def oob_stores(self) -> list[int]:
        return [e[1] for e in self.events if e[0] == "store" and not e[3]]

    def oob_sp_writes(self) -> list[int]:
        return [e[1] for e in self.events if e[0] == "setsp" and not e[2]]

    def forbidden_ops(self) -> list[int]:
        return [e[1] for e in self.events if e[0] == "privop"]

    def executed_ops(self) -> list[str]:
        return [e[1] for e in self.events if e[0] == "op"]

    @property
    def clean(self) -> bool:
        return not (self.oob_stores() or self.oob_sp_writes() or self.forbidden_ops())


def default_registers(bounds: Bounds) -> dict[str, int]:
    regs = {f"r{i}": (bounds.lower + 0x1000 * (i + 1)) & MASK64 for i in range(16)}
    regs["sp"] = bounds.lower + 0x8000
    return regs


def simulate(
    program: SfiProgram,
    bounds: BoundsPolicy = Bounds(),
    fuel: int = 1000,
    registers: Optional[dict[str, int]] = None,
) -> Trace:
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    trace = Trace()
    instrs = program.instrs
    if not instrs:
        return trace
    labels = program.labels()
    regs = dict(registers) if registers else default_registers(bounds_for(bounds, "code"))
    regs.setdefault("sp", 0)
    flag = 0                      # sign(b - a) of the last cmp a, b
    memory: dict[int, int] = {}
    spill: list[int] = []         # push/pop stack (values)
    calls: list[int] = []         # call/ret shadow stack (indices)
    pc = program.entry_index()

    def ea(addr: Addr) -> int:
        v = addr.disp
        if addr.base:
            v += regs.get(addr.base, 0)
        if addr.index:
            v += regs.get(addr.index, 0) * addr.scale
        return v & MASK64

    while trace.steps < fuel:
        if pc < 0 or pc >= len(instrs):
            trace.events.append(("wild-jump", pc))
            return trace
        ins = instrs[pc]
        trace.steps += 1
        trace.events.append(("op", ins.op, pc))
        b = bounds_for(bounds, ins.section)
        op = ins.op

        if op == "halt":
            return trace
        if op == "privop":
            trace.events.append(("privop", pc))
            pc += 1
            continue
        if op == "nop":
            pc += 1
            continue
        if op == "push":
            spill.append(regs.get(ins.args[0], 0))
            pc += 1
            continue
        if op == "pop":
            regs[ins.args[0]] = spill.pop() if spill else 0
            pc += 1
            continue
        if op == "movabs":
            regs[ins.args[1]] = ins.args[0] & MASK64
            pc += 1
            continue
        if op == "lea":
            regs[ins.args[1]] = ea(ins.args[0])
            pc += 1
            continue
        if op == "cmp":
            a = regs.get(ins.args[0], 0)
            bb = regs.get(ins.args[1], 0)
            flag = (bb > a) - (bb < a)
            pc += 1
            continue
        if op == "ja":
            pc = labels[ins.args[0]] if flag > 0 else pc + 1
            continue
        if op == "jb":
            pc = labels[ins.args[0]] if flag < 0 else pc + 1
            continue
        if op == "jmp":
            if ins.is_indirect_jump:
                pc = regs.get(ins.args[0], 0)
            else:
                pc = labels[ins.args[0]]
            continue
        if op == "call":
            calls.append(pc + 1)
            pc = labels[ins.args[0]]
            continue
        if op == "ret":
            if not calls:
                return trace
            pc = calls.pop()
            continue
        if op == "store":
            addr = ea(ins.args[1])
            memory[addr] = regs.get(ins.args[0], 0)
            trace.events.append(("store", addr, regs.get(ins.args[0], 0), b.contains(addr)))
            pc += 1
            continue
        if op == "load":
            regs[ins.args[1]] = memory.get(ea(ins.args[0]), 0)
            pc += 1
            continue
        if op == "setsp":
            src = ins.args[0]
            value = (src if isinstance(src, int) else regs.get(src, 0)) & MASK64
            regs["sp"] = value
            trace.events.append(("setsp", value, b.contains(value)))
            pc += 1
            continue
        trace.events.append(("bad-op", pc))
        return trace

    trace.truncated = True
    return trace
