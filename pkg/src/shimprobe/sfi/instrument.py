"""Reference instrumenter: inserts the canonical guard ahead of every
dangerous instruction.

The guard saves two scratch registers, computes the effective address,
range-checks it against the section's bound constants (exit on failure),
and restores the scratch registers: eleven instructions ahead of the
guarded one. Indirect jumps get the same shape with the valid-target
window as bounds. Labels that pointed at a dangerous instruction are
moved to its guard's first instruction so existing branches run the
check. Programs containing the forbidden opcode are refused outright.
"""

from __future__ import annotations

from ..errors import SfiError
from .isa import Addr, Bounds, BoundsPolicy, Instr, SfiProgram, bounds_for

EXIT_LABEL = ".sfi_exit"
SCRATCH_POOL = ("r14", "r15", "r13", "r12")

GUARD_LEN = 11


def _pick_scratch(used: set[str]) -> tuple[str, str]:
    avail = [r for r in SCRATCH_POOL if r not in used]
    if len(avail) < 2:
        raise SfiError("address expression uses too many scratch registers")
    return avail[0], avail[1]


def guard_sequence(addr: Addr, bounds: Bounds, section: str) -> list[Instr]:
    a, b = _pick_scratch(addr.registers())
    mk = lambda op, *args: Instr(op, tuple(args), (), section)
    return [
        mk("push", a),
        mk("push", b),
        mk("lea", addr, a),
        mk("movabs", bounds.lower, b),
        mk("cmp", a, b),
        mk("ja", EXIT_LABEL),       # lower bound above the address: exit
        mk("movabs", bounds.upper, b),
        mk("cmp", a, b),
        mk("jb", EXIT_LABEL),       # upper bound below the address: exit
        mk("pop", b),
        mk("pop", a),
    ]


def _danger_addr(ins: Instr) -> Addr | None:
    """Effective-address expression whose value the guard must check."""
    if ins.op == "store":
        return ins.args[1]
    if ins.op == "setsp":
        src = ins.args[0]
        if isinstance(src, int):
            return Addr(disp=src)
        return Addr(base=src)
    if ins.is_indirect_jump:
        return Addr(base=ins.args[0])
    return None


def _guard_bounds(ins: Instr, policy: BoundsPolicy) -> Bounds:
    b = bounds_for(policy, ins.section)
    if ins.is_indirect_jump:
        return Bounds(lower=b.code_lower, upper=b.code_upper,
                      code_lower=b.code_lower, code_upper=b.code_upper)
    return b


def instrument(program: SfiProgram, bounds: BoundsPolicy = Bounds()) -> SfiProgram:
    """Insert guards; returns a new program. Refuses forbidden opcodes."""
    for i, ins in enumerate(program.instrs):
        if ins.op == "privop":
            raise SfiError(f"refusing to instrument: forbidden opcode at {i}")

    out: list[Instr] = []
    inserted = False
    for ins in program.instrs:
        addr = _danger_addr(ins)
        if addr is None:
            out.append(ins)
            continue
        gb = _guard_bounds(ins, bounds)
        guard = guard_sequence(addr, gb, ins.section)
        # any label on the dangerous instruction must land on the guard
        guard[0] = guard[0].with_labels(ins.labels)
        out.extend(guard)
        out.append(ins.with_labels(()))
        inserted = True

    if inserted:
        last_section = out[-1].section if out else "code"
        out.append(Instr("halt", (), (EXIT_LABEL,), last_section))
    return SfiProgram(out, program.entry, list(program.parse_errors))
