"""Report assembly: one machine-readable document, one rendered table.

The headline row mirrors the exposure-statistics shape: number of
supported syscalls, number exposed to the host, and whether raw syscall
instructions are serviced. Below it come the per-field sanitization
matrix, the return-check matrix, and the channel ranking, all from the
same data.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .channel import ChannelEstimate
from .exposure import ExposureResult, REJECTED_UNSUPPORTED
from .returns import ReturnCheckResult
from .sanitize import NOT_EXERCISED, SanitizationResult


@dataclass
class Report:
    session: str
    policy: str
    backend: str
    stages: list[str]
    native_syscall_support: object          # True / False / None when not probed
    supported: int
    exposed: int
    exercised: int
    exposure: dict
    sanitization: list
    return_checks: dict
    channels: list
    partial: bool = False
    ambiguous_k: int = 0

    def to_doc(self) -> dict:
        return {
            "session": self.session,
            "policy": self.policy,
            "backend": self.backend,
            "stages": self.stages,
            "native_syscall_support": self.native_syscall_support,
            "supported": self.supported,
            "exposed": self.exposed,
            "exercised": self.exercised,
            "exposure": self.exposure,
            "sanitization": self.sanitization,
            "return_checks": self.return_checks,
            "channels": self.channels,
            "partial": self.partial,
            "ambiguous_k": self.ambiguous_k,
        }


def build_report(
    session: str,
    policy_name: str,
    backend: str,
    stages: list[str],
    exposure: dict[str, ExposureResult],
    sanitization: dict[tuple[str, str], SanitizationResult],
    return_checks: dict[str, ReturnCheckResult],
    channels: list[ChannelEstimate],
    native_support=None,
    partial: bool = False,
    ambiguous_k: int = 0,
) -> Report:
    supported = sum(1 for r in exposure.values() if r.klass != REJECTED_UNSUPPORTED)
    exposed = sum(1 for r in exposure.values() if r.exposed)
    exp_doc = {
        name: {
            "class": r.klass,
            **({"target": r.target} if r.target else {}),
            "counts": r.counts,
            "evidence": r.evidence,
        }
        for name, r in sorted(exposure.items())
    }
    san_doc = [
        {
            "syscall": r.spec,
            "field": r.path,
            "class": r.klass,
            **({"codomain": r.codomain} if r.codomain else {}),
            "evidence": r.evidence,
        }
        for (s, p), r in sorted(sanitization.items())
        if r.klass != NOT_EXERCISED
    ]
    ret_doc = {
        name: {
            "class": r.klass,
            **({"leaking": r.leaking} if r.leaking else {}),
            "aspects": r.aspects,
            "evidence": r.evidence,
        }
        for name, r in sorted(return_checks.items())
    }
    chan_doc = [
        {
            "syscall": c.spec,
            "bits_per_call": c.bits_per_call,
            "calls_per_s": round(c.rate, 3),
            "bandwidth_bits_per_s": round(c.bandwidth, 3),
        }
        for c in sorted(channels, key=lambda c: -c.bandwidth)
    ]
    return Report(
        session=session,
        policy=policy_name,
        backend=backend,
        stages=stages,
        native_syscall_support=native_support,
        supported=supported,
        exposed=exposed,
        exercised=len(exposure),
        exposure=exp_doc,
        sanitization=san_doc,
        return_checks=ret_doc,
        channels=chan_doc,
        partial=partial,
        ambiguous_k=ambiguous_k,
    )


def _fmt_bandwidth(bps: float) -> str:
    if bps >= 1e6:
        return f"{bps / 1e6:.2f} Mbit/s"
    if bps >= 1e3:
        return f"{bps / 1e3:.2f} kbit/s"
    return f"{bps:.0f} bit/s"


def render_text(report: Report) -> str:
    lines = []
    native = {True: "yes", False: "no", None: "not probed"}[report.native_syscall_support]
    lines.append(f"session {report.session}  policy={report.policy}  backend={report.backend}")
    if report.partial:
        lines.append("*** PARTIAL SESSION: results below may be incomplete ***")
    lines.append("")
    lines.append(f"supported syscalls : {report.supported}")
    lines.append(f"exposed to host    : {report.exposed}")
    lines.append(f"native syscalls    : {native}")
    if report.ambiguous_k:
        lines.append(f"ambiguous K records: {report.ambiguous_k}")
    lines.append("")
    lines.append("exposure:")
    for name, row in report.exposure.items():
        extra = f" -> {row['target']}" if "target" in row else ""
        lines.append(f"  {name:<16} {row['class']}{extra}")
    if report.sanitization:
        lines.append("")
        lines.append("parameter sanitization (exercised fields, non-pass-through first):")
        rows = sorted(report.sanitization, key=lambda r: (r["class"] == "passed-through", r["syscall"], r["field"]))
        for row in rows:
            cod = f" [{row['codomain']}]" if "codomain" in row else ""
            lines.append(f"  {row['syscall']:<12} {row['field']:<28} {row['class']}{cod}")
    if report.return_checks:
        lines.append("")
        lines.append("return-value checking:")
        for name, row in report.return_checks.items():
            leak = f" leaking={','.join(row['leaking'])}" if row.get("leaking") else ""
            lines.append(f"  {name:<16} {row['class']}{leak}")
    if report.channels:
        lines.append("")
        lines.append("covert-channel ranking (bits/call x calls/s):")
        for row in report.channels[:15]:
            lines.append(
                f"  {row['syscall']:<16} {row['bits_per_call']:>6} b/call"
                f" x {row['calls_per_s']:>12,.0f}/s = {_fmt_bandwidth(row['bandwidth_bits_per_s'])}"
            )
    return "\n".join(lines) + "\n"
