"""Campaign plan files: which syscalls to drive, how, and how often."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import yaml

from ..errors import PlanError
from .generate import Strategy


@dataclass(frozen=True)
class PlanEntry:
    spec_name: str
    strategy: Strategy
    iterations: int
    seed: int


@dataclass(frozen=True)
class CampaignPlan:
    entries: tuple[PlanEntry, ...]

    def total_iterations(self) -> int:
        return sum(e.iterations for e in self.entries)

    def spec_names(self) -> list[str]:
        seen = []
        for e in self.entries:
            if e.spec_name not in seen:
                seen.append(e.spec_name)
        return seen

    def to_doc(self) -> list[dict]:
        return [
            {
                "syscall": e.spec_name,
                "strategy": e.strategy.value,
                "iterations": e.iterations,
                "seed": e.seed,
            }
            for e in self.entries
        ]

    @classmethod
    def from_doc(cls, doc) -> "CampaignPlan":
        entries = []
        for row in doc:
            try:
                entries.append(
                    PlanEntry(
                        spec_name=row["syscall"],
                        strategy=Strategy(row["strategy"]),
                        iterations=int(row["iterations"]),
                        seed=int(row["seed"]),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise PlanError(f"bad plan row {row!r}: {exc}") from exc
        return cls(tuple(entries))


def make_plan(
    spec_names: Iterable[str],
    strategies: Iterable[Strategy],
    iterations: int,
    master_seed: int,
) -> CampaignPlan:
    """Derive one deterministic entry per (syscall, strategy)."""
    entries = []
    for name in spec_names:
        for strat in strategies:
            entry_seed = derive_seed(master_seed, name, strat.value)
            entries.append(PlanEntry(name, strat, iterations, entry_seed))
    return CampaignPlan(tuple(entries))


def derive_seed(master: int, *parts: str) -> int:
    import hashlib

    h = hashlib.sha256(str(master).encode())
    for p in parts:
        h.update(b"\x00" + p.encode())
    return int.from_bytes(h.digest()[:8], "little")


def load_plan(path) -> CampaignPlan:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "plan" not in doc:
        raise PlanError(f"{path}: missing 'plan' section")
    return CampaignPlan.from_doc(doc["plan"])


def save_plan(plan: CampaignPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump({"plan": plan.to_doc()}, fh, sort_keys=False)
