"""Miniature instruction set for fault-isolation checking.

A deliberately small, deterministic assembly dialect: sixteen general
registers (r0-r15) plus a stack pointer, absolute 64-bit immediates, and
the handful of opcodes the guard pattern needs. Programs are line-oriented
text with section directives; every instruction belongs to one of the
code, data, or library sections.

Comparison semantics are AT&T-flavored: ``cmp a, b`` compares b against a,
so a following ``ja`` is taken when b > a and ``jb`` when b < a.
Call/return use a shadow stack, and push/pop use a private spill stack;
neither touches addressable data memory, which keeps "every store in the
trace" a complete account of memory writes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

REGISTERS = tuple(f"r{i}" for i in range(16)) + ("sp",)

OPCODES = (
    "store",    # store rS -> [addr]        (mov-store)
    "load",     # load [addr] -> rD         (mov-load)
    "push",     # push rX
    "pop",      # pop rX
    "lea",      # lea [addr] -> rD
    "cmp",      # cmp rA, rB
    "ja",       # ja LABEL
    "jb",       # jb LABEL
    "jmp",      # jmp LABEL | jmp rX
    "movabs",   # movabs 0xIMM -> rD
    "call",     # call LABEL
    "ret",
    "setsp",    # setsp rX | setsp 0xIMM    (stack-pointer write)
    "privop",   # forbidden opcode
    "nop",
    "halt",
)

SECTIONS = ("code", "data", "library")


@dataclass(frozen=True)
class Addr:
    """[base + index*scale + disp]; any component may be absent."""

    base: Optional[str] = None
    index: Optional[str] = None
    scale: int = 1
    disp: int = 0

    def __str__(self) -> str:
        parts = []
        if self.base:
            parts.append(self.base)
        if self.index:
            parts.append(f"{self.index}*{self.scale}")
        if self.disp or not parts:
            parts.append(hex(self.disp))
        return "[" + "+".join(parts) + "]"

    def registers(self) -> set[str]:
        out = set()
        if self.base:
            out.add(self.base)
        if self.index:
            out.add(self.index)
        return out


Operand = Union[str, int, Addr]


@dataclass(frozen=True)
class Instr:
    op: str
    args: tuple[Operand, ...] = ()
    labels: tuple[str, ...] = ()
    section: str = "code"

    def __str__(self) -> str:
        a = self.args
        if self.op == "store":
            body = f"store {a[0]} -> {a[1]}"
        elif self.op == "load":
            body = f"load {a[0]} -> {a[1]}"
        elif self.op == "lea":
            body = f"lea {a[0]} -> {a[1]}"
        elif self.op == "movabs":
            body = f"movabs {hex(a[0])} -> {a[1]}"
        elif self.op == "cmp":
            body = f"cmp {a[0]}, {a[1]}"
        elif self.op in ("ja", "jb", "jmp", "call", "push", "pop", "setsp"):
            arg = hex(a[0]) if isinstance(a[0], int) else str(a[0])
            body = f"{self.op} {arg}"
        else:
            body = self.op
        return body

    def with_labels(self, labels: tuple[str, ...]) -> "Instr":
        return Instr(self.op, self.args, labels, self.section)

    def branch_target(self) -> Optional[str]:
        if self.op in ("ja", "jb", "call") or (self.op == "jmp" and isinstance(self.args[0], str) and self.args[0] not in REGISTERS):
            return self.args[0]
        return None

    @property
    def is_indirect_jump(self) -> bool:
        return self.op == "jmp" and self.args and self.args[0] in REGISTERS


@dataclass
class SfiProgram:
    instrs: list[Instr]
    entry: Optional[str] = None
    parse_errors: list[str] = field(default_factory=list)

    def labels(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for i, ins in enumerate(self.instrs):
            for lbl in ins.labels:
                out.setdefault(lbl, i)
        return out

    def entry_index(self) -> int:
        if self.entry:
            return self.labels().get(self.entry, 0)
        return 0

    def __len__(self) -> int:
        return len(self.instrs)


# Default guard constants: the storable window and the valid indirect
# branch target window (instruction indices).
DEFAULT_LOWER = 0x3FFF_0000_0000
DEFAULT_UPPER = 0x4FFF_0000_0000


@dataclass(frozen=True)
class Bounds:
    lower: int = DEFAULT_LOWER
    upper: int = DEFAULT_UPPER
    code_lower: int = 0
    code_upper: int = 1 << 20

    def __post_init__(self):
        if self.lower >= self.upper:
            raise ValueError("bounds: lower must be < upper")

    def contains(self, addr: int) -> bool:
        return self.lower <= addr <= self.upper

    def code_contains(self, target: int) -> bool:
        return self.code_lower <= target <= self.code_upper


BoundsPolicy = Union[Bounds, dict]


def bounds_for(policy: BoundsPolicy, section: str) -> Bounds:
    if isinstance(policy, Bounds):
        return policy
    return policy.get(section) or policy.get("code") or Bounds()


@dataclass(frozen=True)
class Violation:
    kind: str       # UnguardedStore | DirectBranchBypass | IndirectBranchUnchecked
                    # | ForbiddenOpcode | UnguardedStackPtrWrite
                    # | UninstrumentedLibrary | Malformed
    site: int
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}@{self.site}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class Verdict:
    accept: bool
    violations: list[Violation]

    @classmethod
    def from_violations(cls, violations: list[Violation]) -> "Verdict":
        return cls(not violations, violations)

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------

_ADDR_RE = re.compile(r"^\[(?P<body>[^\]]*)\]$")


def _parse_addr(text: str) -> Addr:
    m = _ADDR_RE.match(text.strip())
    if not m:
        raise ValueError(f"bad address expression {text!r}")
    base = index = None
    scale, disp = 1, 0
    for part in m.group("body").replace(" ", "").split("+"):
        if not part:
            continue
        if "*" in part:
            reg, s = part.split("*", 1)
            if reg not in REGISTERS:
                raise ValueError(f"bad index register {reg!r}")
            index, scale = reg, int(s, 0)
        elif part in REGISTERS:
            if base is None:
                base = part
            elif index is None:
                index = part
            else:
                raise ValueError(f"too many registers in {text!r}")
        else:
            disp = int(part, 0)
    return Addr(base, index, scale, disp)


def parse_program(text: str) -> SfiProgram:
    """Parse the textual form. Errors are collected, not raised; the
    verifier turns them into a malformed verdict."""
    instrs: list[Instr] = []
    pending_labels: list[str] = []
    section = "code"
    entry = None
    errors: list[str] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith(".section"):
            name = line.split(None, 1)[1].strip() if len(line.split(None, 1)) > 1 else ""
            if name not in SECTIONS:
                errors.append(f"line {lineno}: unknown section {name!r}")
            else:
                section = name
            continue
        if line.startswith(".entry"):
            entry = line.split(None, 1)[1].strip()
            continue
        if line.endswith(":"):
            pending_labels.append(line[:-1].strip())
            continue
        try:
            ins = _parse_instr(line, section)
        except (ValueError, IndexError) as exc:
            errors.append(f"line {lineno}: {exc}")
            continue
        if pending_labels:
            ins = ins.with_labels(tuple(pending_labels))
            pending_labels = []
        instrs.append(ins)

    if pending_labels and instrs:
        errors.append(f"trailing labels with no instruction: {pending_labels}")
    prog = SfiProgram(instrs, entry, errors)
    labels = prog.labels()
    for i, ins in enumerate(instrs):
        tgt = ins.branch_target()
        if tgt is not None and tgt not in labels:
            errors.append(f"instr {i}: unresolved branch target {tgt!r}")
    if entry and entry not in labels:
        errors.append(f"unresolved entry label {entry!r}")
    return prog


def _split_arrow(rest: str) -> tuple[str, str]:
    if "->" not in rest:
        raise ValueError(f"expected '->' in {rest!r}")
    left, right = rest.split("->", 1)
    return left.strip(), right.strip()


def _reg(text: str) -> str:
    text = text.strip()
    if text not in REGISTERS:
        raise ValueError(f"bad register {text!r}")
    return text


def _parse_instr(line: str, section: str) -> Instr:
    parts = line.split(None, 1)
    op = parts[0]
    rest = parts[1].strip() if len(parts) > 1 else ""
    if op not in OPCODES:
        raise ValueError(f"unknown opcode {op!r}")
    if op in ("nop", "ret", "halt", "privop"):
        if rest:
            raise ValueError(f"{op} takes no operands")
        return Instr(op, (), (), section)
    if op in ("push", "pop"):
        return Instr(op, (_reg(rest),), (), section)
    if op == "setsp":
        if rest in REGISTERS:
            return Instr(op, (rest,), (), section)
        return Instr(op, (int(rest, 0),), (), section)
    if op == "store":
        src, addr = _split_arrow(rest)
        return Instr(op, (_reg(src), _parse_addr(addr)), (), section)
    if op == "load":
        addr, dst = _split_arrow(rest)
        return Instr(op, (_parse_addr(addr), _reg(dst)), (), section)
    if op == "lea":
        addr, dst = _split_arrow(rest)
        return Instr(op, (_parse_addr(addr), _reg(dst)), (), section)
    if op == "movabs":
        imm, dst = _split_arrow(rest)
        return Instr(op, (int(imm, 0), _reg(dst)), (), section)
    if op == "cmp":
        a, b = (x.strip() for x in rest.split(",", 1))
        return Instr(op, (_reg(a), _reg(b)), (), section)
    if op in ("ja", "jb", "call"):
        return Instr(op, (rest,), (), section)
    if op == "jmp":
        if rest in REGISTERS:
            return Instr(op, (rest,), (), section)
        return Instr(op, (rest,), (), section)
    raise ValueError(f"unhandled opcode {op!r}")


def format_program(prog: SfiProgram) -> str:
    lines = []
    section = None
    if prog.entry:
        lines.append(f".entry {prog.entry}")
    for ins in prog.instrs:
        if ins.section != section:
            section = ins.section
            lines.append(f".section {section}")
        for lbl in ins.labels:
            lines.append(f"{lbl}:")
        lines.append(f"    {ins}")
    return "\n".join(lines) + "\n"
