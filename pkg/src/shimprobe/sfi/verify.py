"""Load-time verifier for instrumented programs.

Accepts a program only when:

(a) every store and stack-pointer write is immediately preceded by the
    canonical guard over its own effective address, with the constants
    the bounds policy demands for that instruction's section (a guard
    carrying foreign constants is no guard);
(b) no direct branch lands strictly inside a guard's span, i.e. anywhere
    after the guard's first instruction up to and including the guarded
    instruction, which closes the jump-into-the-middle bypass;
(c) every indirect jump is preceded by the same guard shape over its
    target register with the valid-target window as constants;
(d) the forbidden opcode never appears, in any section;
(e) library sections satisfy all of the above; a violation whose site
    lies in the library section also reports the library as
    uninstrumented.

Parse or shape errors produce a malformed verdict, never an exception.
An empty program is vacuously accepted.
"""

from __future__ import annotations

from .instrument import EXIT_LABEL, GUARD_LEN, SCRATCH_POOL, _danger_addr, _guard_bounds
from .isa import Addr, Bounds, BoundsPolicy, Instr, SfiProgram, Verdict, Violation


def _match_guard(instrs: list[Instr], end: int, addr: Addr, bounds: Bounds,
                 labels: dict[str, int]) -> str:
    """Check instrs[end-11:end] is the canonical guard for ``addr``.

    Returns "" when it matches, else a short reason.
    """
    start = end - GUARD_LEN
    if start < 0:
        return "no room for guard"
    g = instrs[start:end]
    if [i.op for i in g] != ["push", "push", "lea", "movabs", "cmp", "ja",
                            "movabs", "cmp", "jb", "pop", "pop"]:
        return "guard shape mismatch"
    a = g[0].args[0]
    b = g[1].args[0]
    if a == b or a not in SCRATCH_POOL or b not in SCRATCH_POOL:
        return "bad scratch registers"
    if a in addr.registers() or b in addr.registers():
        return "scratch register aliases the guarded address"
    if g[2].args != (addr, a):
        return "guard checks a different address"
    if g[3].args != (bounds.lower, b):
        return f"lower-bound constant mismatch (want {hex(bounds.lower)})"
    if g[4].args != (a, b):
        return "first compare malformed"
    if g[5].args[0] not in labels or instrs[labels[g[5].args[0]]].op != "halt":
        return "exit target is not a halt"
    if g[6].args != (bounds.upper, b):
        return f"upper-bound constant mismatch (want {hex(bounds.upper)})"
    if g[7].args != (a, b):
        return "second compare malformed"
    if g[8].args[0] not in labels or instrs[labels[g[8].args[0]]].op != "halt":
        return "exit target is not a halt"
    if g[9].args != (b,) or g[10].args != (a,):
        return "register restore malformed"
    return ""


def verify(program: SfiProgram, bounds: BoundsPolicy = Bounds()) -> Verdict:
    violations: list[Violation] = []
    for err in program.parse_errors:
        violations.append(Violation("Malformed", -1, err))
    if violations:
        return Verdict.from_violations(violations)

    instrs = program.instrs
    labels = program.labels()
    guard_spans: list[tuple[int, int]] = []   # (guard_start, guarded_index)

    for i, ins in enumerate(instrs):
        if ins.op == "privop":
            violations.append(Violation("ForbiddenOpcode", i, ins.section))
            continue
        addr = _danger_addr(ins)
        if addr is None:
            continue
        reason = _match_guard(instrs, i, addr, _guard_bounds(ins, bounds), labels)
        if reason:
            kind = {
                "store": "UnguardedStore",
                "setsp": "UnguardedStackPtrWrite",
            }.get(ins.op, "IndirectBranchUnchecked")
            violations.append(Violation(kind, i, reason))
        else:
            guard_spans.append((i - GUARD_LEN, i))

    for i, ins in enumerate(instrs):
        tgt = ins.branch_target()
        if tgt is None:
            continue
        t = labels.get(tgt)
        if t is None:
            violations.append(Violation("Malformed", i, f"unresolved target {tgt!r}"))
            continue
        for start, guarded in guard_spans:
            if start < t <= guarded and not (start <= i <= guarded):
                violations.append(Violation(
                    "DirectBranchBypass", i,
                    f"target {tgt!r} lands inside the guard of instr {guarded}",
                ))
                break

    if any(v.site >= 0 and instrs[v.site].section == "library" for v in violations):
        violations.append(Violation("UninstrumentedLibrary", -1, "library"))
    return Verdict.from_violations(violations)
