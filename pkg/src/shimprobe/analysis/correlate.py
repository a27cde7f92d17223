"""Pairing of harness-side and kernel-side records.

Sessions are strictly serialized and every kernel service advances the
session clock, so a kernel-side record's timestamp falls inside exactly
one call window: the kernel record at time t belongs to the first
harness record whose completion time is >= t. Temporal attribution is
therefore exact; the name check afterwards (identical, registered
rewrite, or structural match give-or-take one added field) only guards
against noise. Kernel records nothing explains are flagged ambiguous,
never dropped.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field

from ..harness.records import CallRecord
from ..model.types import Composite

# src -> plausible rewrite targets
DISTORTION_TABLE: dict[str, tuple[str, ...]] = {
    "read": ("pread64",),
    "write": ("pwrite64",),
    "open": ("openat",),
}

_REVERSE: dict[str, list[str]] = {}
for _src, _tgts in DISTORTION_TABLE.items():
    for _t in _tgts:
        _REVERSE.setdefault(_t, []).append(_src)


@dataclass
class CallPair:
    u: CallRecord
    k: CallRecord

    @property
    def distorted(self) -> bool:
        return self.u.name != self.k.name


@dataclass
class Correlation:
    pairs: list[CallPair]
    unmatched_k: list[CallRecord]
    paired_u_seqs: set[int] = field(default_factory=set)

    def pairs_for(self, spec_name: str) -> list[CallPair]:
        return [p for p in self.pairs if p.u.name == spec_name]


def _param_names(tree: Composite | None) -> list[str]:
    if tree is None:
        return []
    return [n for n, _ in tree.children]


def _compatible(u: CallRecord, k: CallRecord) -> bool:
    if u.name == k.name:
        return True
    if u.name in _REVERSE.get(k.name, []):
        return True
    up, kp = _param_names(u.args), _param_names(k.args)
    if abs(len(up) - len(kp)) > 1:
        return False
    shorter, longer = (up, kp) if len(up) <= len(kp) else (kp, up)
    return bool(shorter) and set(shorter) <= set(longer)


def correlate(u_records: list[CallRecord], k_records: list[CallRecord]) -> Correlation:
    us = sorted(u_records, key=lambda r: r.seq)
    times = [u.time_ns for u in us]
    paired: set[int] = set()
    pairs: list[CallPair] = []
    unmatched: list[CallRecord] = []

    for k in k_records:
        idx = bisect_left(times, k.time_ns)
        owner = None
        # ties can only be rejected/internal calls stacked at the same
        # instant; scan the tied run for the compatible owner
        j = idx
        while j < len(us) and us[j].time_ns == k.time_ns:
            if us[j].seq not in paired and _compatible(us[j], k):
                owner = us[j]
                break
            j += 1
        if owner is None and idx < len(us):
            cand = us[idx]
            if cand.seq not in paired and cand.time_ns >= k.time_ns and _compatible(cand, k):
                owner = cand
        if owner is None:
            unmatched.append(k)
            continue
        paired.add(owner.seq)
        pairs.append(CallPair(owner, k))

    return Correlation(pairs, unmatched, paired)


def strategy_blocks(metas: list[dict]) -> list[tuple[int, str, str]]:
    """(after_seq, spec, strategy) boundaries from block meta lines."""
    out = []
    for m in metas:
        if m.get("type") == "block":
            out.append((int(m["after_seq"]), m["name"], m["strategy"]))
    return out


def strategy_of(seq: int, blocks: list[tuple[int, str, str]]) -> str:
    current = ""
    for after_seq, _, strat in blocks:
        if seq > after_seq:
            current = strat
        else:
            break
    return current
