"""In-sandbox harness: realizes test cases, invokes through the shim, and
emits the harness-side record stream.

Each cycle is hermetic: resources are prepared first, the argument tree is
materialized in a fresh address space, the call is issued (through the
shim's function interface or as a raw trap), out-parameters are
re-encoded after the call, and the cycle footprint is swept before the
next cycle starts. A faulting invocation produces a fault record, never a
crash.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from ..errors import MemoryAccessError
from ..fuzz.generate import Strategy, TestCase, generate, resolve_resources
from ..fuzz.plan import CampaignPlan, derive_seed
from ..fuzz.resources import ResourceExhaustion
from ..model.encode import encode_value_tree, realize_args
from ..model.registry import SyscallRegistry
from ..model.types import ArgDir
from .records import CallRecord, LogWriter, RetValue

log = logging.getLogger(__name__)


class InvocationMethod(str, Enum):
    WRAPPER = "wrapper"
    DIRECT_TRAP = "direct-trap"


class Harness:
    def __init__(
        self,
        shim,
        registry: SyscallRegistry,
        session: str,
        writer: Optional[LogWriter],
        clock,
        app_mem_factory: Callable,
    ):
        self.shim = shim
        self.registry = registry
        self.session = session
        self.writer = writer
        self.clock = clock
        self.app_mem_factory = app_mem_factory
        self._seq = 0

    def invoke(self, case: TestCase, method: InvocationMethod, resources) -> CallRecord:
        spec = self.registry.lookup(case.spec_name)
        app_mem = self.app_mem_factory()
        concrete = resolve_resources(case.args, resources)
        words = realize_args(spec, concrete, app_mem, self.registry)
        args_tree = encode_value_tree(spec, words, app_mem, self.registry)

        try:
            if method is InvocationMethod.DIRECT_TRAP:
                result = self.shim.trap(spec.number, words, app_mem)
            else:
                result = self.shim.call(spec.name, words, app_mem)
            fault = result.fault
            value = result.ret
        except MemoryAccessError:
            fault, value = "invocation-error", None

        ret = RetValue(value=value, fault=fault)
        if fault is None and any(p.dir is not ArgDir.IN for p in spec.params):
            ret.out = encode_value_tree(spec, words, app_mem, self.registry)

        self._seq += 1
        rec = CallRecord(
            side="U",
            session=self.session,
            seq=self._seq,
            name=spec.name,
            args=args_tree,
            ret=ret,
            time_ns=self.clock.now_ns,
        )
        if self.writer is not None:
            self.writer.write_record(rec)
        return rec


def run_campaign(
    plan: CampaignPlan,
    registry: SyscallRegistry,
    harness: Harness,
    sandbox,
    kernels: tuple = (),
    method: InvocationMethod = InvocationMethod.WRAPPER,
) -> dict:
    """Drive a plan through the harness; returns the campaign summary.

    ``kernels`` are swept after every cycle so objects created by the
    call itself (descriptors from open/dup, fresh mappings) never leak
    into the next cycle.
    """
    started = time.time()
    t0 = harness.clock.now_ns
    per_spec: dict[str, int] = {}
    faults = 0
    skipped = 0

    for entry in plan.entries:
        spec = registry.lookup(entry.spec_name)
        if harness.writer:
            harness.writer.write_meta(
                "block",
                name=entry.spec_name,
                strategy=entry.strategy.value,
                after_seq=harness._seq,
            )
        for i in range(entry.iterations):
            case_seed = derive_seed(entry.seed, str(i))
            case = generate(spec, entry.strategy, case_seed, registry)
            for k in kernels:
                k.begin_cycle()
            try:
                resources = sandbox.prepare(spec)
            except ResourceExhaustion as exc:
                skipped += 1
                log.warning("cycle skipped for %s: %s", spec.name, exc)
                if harness.writer:
                    harness.writer.write_meta("backoff", name=spec.name, reason=str(exc))
                continue
            try:
                rec = harness.invoke(case, method, resources)
                if rec.ret.fault is not None:
                    faults += 1
            finally:
                sandbox.release(resources)
                for k in kernels:
                    k.sweep_cycle()
            per_spec[spec.name] = per_spec.get(spec.name, 0) + 1

    summary = {
        "iterations": sum(per_spec.values()),
        "per_spec": per_spec,
        "faults": faults,
        "skipped": skipped,
        "duration_ns": harness.clock.now_ns - t0,
        "wall_s": round(time.time() - started, 3),
    }
    if harness.writer:
        harness.writer.write_meta("summary", **summary)
    return summary
