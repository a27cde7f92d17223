"""Proof-of-concept corpus: four attack programs, four benign counterparts.

Attacks: an unauthorized store (plus a stack-pointer spill), a direct jump
into the middle of an instrumentation, a forbidden-opcode gadget, and a
crafted library containing a dangerous store. Each benign counterpart is
the properly instrumented version of the same behavior. The matrix groups
the pairs by the fault-isolation functionality they exercise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .isa import Bounds, SfiProgram, Verdict, parse_program
from .simulate import simulate
from .verify import verify

CORPUS_DIR = Path(__file__).parent / "corpus_files"


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    program: SfiProgram
    expect_accept: bool
    expect_kinds: frozenset[str]      # violation kinds a rejection must include
    functionality: str


_MANIFEST = [
    # name, accept?, required violation kinds, functionality
    ("attack_unauthorized_store", False,
     {"UnguardedStore", "UnguardedStackPtrWrite"}, "mem-store"),
    ("benign_guarded_store", True, set(), "mem-store"),
    ("attack_guard_bypass", False, {"DirectBranchBypass"}, "direct-branch"),
    ("benign_direct_jump", True, set(), "direct-branch"),
    ("attack_forbidden_op", False, {"ForbiddenOpcode"}, "forbidden-op"),
    ("benign_no_forbidden", True, set(), "forbidden-op"),
    ("attack_crafted_library", False,
     {"UnguardedStore", "UninstrumentedLibrary"}, "library-instrumentation"),
    ("benign_instrumented_library", True, set(), "library-instrumentation"),
]

FUNCTIONALITIES = (
    "mem-store",
    "stack-ptr-write",
    "direct-branch",
    "forbidden-op",
    "library-instrumentation",
)


def poc_corpus(directory: Optional[Path] = None) -> list[CorpusEntry]:
    base = Path(directory) if directory else CORPUS_DIR
    out = []
    for name, accept, kinds, functionality in _MANIFEST:
        text = (base / f"{name}.sfi").read_text(encoding="utf-8")
        out.append(CorpusEntry(name, parse_program(text), accept, frozenset(kinds), functionality))
    return out


def corpus_matrix(directory: Optional[Path] = None, bounds: Bounds = Bounds()) -> dict:
    """Run the verifier over the corpus; emit a functionality matrix.

    A functionality passes when its attack is rejected with the required
    violation kinds and its benign counterpart is accepted. The
    stack-pointer-write column rides on the unauthorized-store pair, whose
    attack includes an unguarded stack-pointer assignment.
    """
    entries = poc_corpus(directory)
    rows = []
    by_name: dict[str, tuple[CorpusEntry, Verdict]] = {}
    for e in entries:
        verdict = verify(e.program, bounds)
        ok = verdict.accept == e.expect_accept and e.expect_kinds <= verdict.kinds()
        rows.append({
            "program": e.name,
            "expected": "accept" if e.expect_accept else "reject",
            "verdict": "accept" if verdict.accept else "reject",
            "violations": sorted(str(v) for v in verdict.violations),
            "pass": ok,
        })
        by_name[e.name] = (e, verdict)

    def _pair_ok(attack: str, benign: str, kinds: set[str]) -> bool:
        ae, av = by_name[attack]
        be, bv = by_name[benign]
        return (not av.accept) and kinds <= av.kinds() and bv.accept

    functionalities = {
        "mem-store": _pair_ok("attack_unauthorized_store", "benign_guarded_store",
                              {"UnguardedStore"}),
        "stack-ptr-write": _pair_ok("attack_unauthorized_store", "benign_guarded_store",
                                    {"UnguardedStackPtrWrite"}),
        "direct-branch": _pair_ok("attack_guard_bypass", "benign_direct_jump",
                                  {"DirectBranchBypass"}),
        "forbidden-op": _pair_ok("attack_forbidden_op", "benign_no_forbidden",
                                 {"ForbiddenOpcode"}),
        "library-instrumentation": _pair_ok("attack_crafted_library",
                                            "benign_instrumented_library",
                                            {"UninstrumentedLibrary"}),
    }
    return {
        "rows": rows,
        "functionalities": functionalities,
        "all_pass": all(r["pass"] for r in rows) and all(functionalities.values()),
    }


def attack_impact_traces(directory: Optional[Path] = None, fuel: int = 400) -> dict[str, dict]:
    """Execute the attacks unverified; show the damage each would do."""
    out = {}
    for e in poc_corpus(directory):
        if e.expect_accept:
            continue
        t = simulate(e.program, fuel=fuel)
        out[e.name] = {
            "oob_stores": t.oob_stores(),
            "oob_sp_writes": t.oob_sp_writes(),
            "forbidden_ops": t.forbidden_ops(),
            "truncated": t.truncated,
        }
    return out
