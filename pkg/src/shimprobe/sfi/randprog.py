"""Seeded random program generation for the soundness sweeps.

Programs mix register loads (in-window and wild addresses alike), stores,
loads, stack-pointer writes, labels, direct branches, calls, and the
occasional library section; never guards and never the forbidden opcode.
Instrumenting one of these and running it under the simulator is the
verifier's randomized soundness check.
"""

from __future__ import annotations

import random

from .isa import Addr, Bounds, Instr, SfiProgram


def random_program(seed: int, bounds: Bounds = Bounds(), size: int = 12) -> SfiProgram:
    rng = random.Random(seed)
    instrs: list[Instr] = []
    label_count = 0
    section = "code"
    with_library = rng.random() < 0.3

    def reg() -> str:
        return f"r{rng.randrange(0, 12)}"   # leave scratch pool free

    def some_addr() -> Addr:
        roll = rng.random()
        if roll < 0.5:
            return Addr(base=reg(), disp=rng.randrange(0, 256, 8))
        if roll < 0.7:
            return Addr(base=reg(), index=reg(), scale=rng.choice([1, 2, 4, 8]),
                        disp=rng.randrange(0, 64, 8))
        return Addr(disp=bounds.lower + rng.randrange(0, 0x10000, 8))

    def emit(op, *args):
        instrs.append(Instr(op, tuple(args), (), section))

    for _ in range(size):
        roll = rng.random()
        if roll < 0.30:
            value = (bounds.lower + rng.randrange(0, bounds.upper - bounds.lower, 8)
                     if rng.random() < 0.6 else rng.getrandbits(47))
            emit("movabs", value, reg())
        elif roll < 0.55:
            emit("store", reg(), some_addr())
        elif roll < 0.65:
            emit("load", some_addr(), reg())
        elif roll < 0.72:
            emit("setsp", reg())
        elif roll < 0.80:
            label_count += 1
            lbl = f"L{label_count}"
            # a forward branch and its landing label
            emit(rng.choice(["jmp", "ja", "jb"]), lbl)
            instrs.append(Instr("nop", (), (lbl,), section))
        elif roll < 0.88:
            emit("cmp", reg(), reg())
        else:
            emit("nop")
    if with_library:
        section = "library"
        lbl = "lib_fn"
        instrs.append(Instr("nop", (), (lbl,), section))
        emit("store", reg(), some_addr())
        emit("ret")
        # call it from the code section tail
        instrs.insert(len(instrs) - 3, Instr("call", (lbl,), (), "code"))
    instrs.append(Instr("halt", (), (), section))
    return SfiProgram(instrs, None)


def random_registers(seed: int, bounds: Bounds = Bounds()) -> dict[str, int]:
    """Mixed in-window and out-of-window register state."""
    rng = random.Random(seed)
    regs = {}
    for i in range(16):
        if rng.random() < 0.5:
            regs[f"r{i}"] = bounds.lower + rng.randrange(0, bounds.upper - bounds.lower)
        else:
            regs[f"r{i}"] = rng.getrandbits(47)
    regs["sp"] = bounds.lower + 0x8000
    return regs
