"""Stage 3 (active half): covert-channel bandwidth estimation.

bandwidth = leaked bits per call x call rate, exactly.

Leaked bits per call follow a conservative, measurable rule: sum over
passed-through fields of min(field bit width, demonstrated-controllable
bits), where a field counts as attacker-controllable only if the
fully-random strategy drove it to at least two distinct kernel-side
values, and the demonstrated bits are the bit positions actually observed
varying kernel-side. Rates come from deltas between consecutive
kernel-side records of the same syscall (virtual time under the mock
backend, wall time under the tracer).
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import median

from ..harness.records import CallRecord
from ..model.encode import flatten
from ..model.types import Bytes, Scalar
from .correlate import CallPair, strategy_of
from .sanitize import PASSED_THROUGH, SanitizationResult


@dataclass(frozen=True)
class ChannelEstimate:
    spec: str
    bits_per_call: int
    rate: float            # calls / second
    bandwidth: float       # bits / second


def estimate_bandwidth(spec: str, bits_per_call: int, rate: float) -> ChannelEstimate:
    return ChannelEstimate(spec, bits_per_call, rate, bits_per_call * rate)


def _varying_int_bits(values: list[int], cap: int) -> int:
    base = values[0]
    acc = 0
    for v in values[1:]:
        acc |= (v ^ base) & ((1 << 64) - 1)
    return min(bin(acc).count("1"), cap)


def _varying_byte_bits(blobs: list[bytes]) -> int:
    width = max(len(b) for b in blobs)
    padded = [b.ljust(width, b"\x00") for b in blobs]
    base = padded[0]
    total = 0
    for i in range(width):
        acc = 0
        for b in padded[1:]:
            acc |= b[i] ^ base[i]
        total += bin(acc).count("1")
    return total


def field_controllable_bits(k_nodes: list) -> int:
    """Demonstrated attacker-controllable bits of one field, kernel-side."""
    scalars = [n.value for n in k_nodes if isinstance(n, Scalar) and isinstance(n.value, int)]
    if len(scalars) == len(k_nodes) and len(set(scalars)) >= 2:
        return _varying_int_bits(scalars, 64)
    strings = [n.value for n in k_nodes if isinstance(n, Scalar) and isinstance(n.value, str)]
    if len(strings) == len(k_nodes) and len(set(strings)) >= 2:
        return _varying_byte_bits([s.encode() for s in strings])
    blobs = [n for n in k_nodes if isinstance(n, Bytes)]
    if len(blobs) == len(k_nodes) and len({(b.length, b.digest) for b in blobs}) >= 2:
        bits = _varying_byte_bits([b.prefix for b in blobs])
        bits += _varying_int_bits([b.length for b in blobs], 32)
        return bits
    return 0


def leaked_bits_per_call(
    spec: str,
    sanitization: dict[tuple[str, str], SanitizationResult],
    pairs: list[CallPair],
    blocks: list[tuple[int, str, str]],
) -> int:
    """Sum demonstrated bits over this syscall's passed-through fields."""
    random_k_nodes: dict[str, list] = {}
    for p in pairs:
        if strategy_of(p.u.seq, blocks) != "fully-random" or p.k.args is None:
            continue
        for fp, node in flatten(p.k.args):
            random_k_nodes.setdefault(str(fp), []).append(node)

    total = 0
    for (s, path), res in sanitization.items():
        if s != spec or res.klass != PASSED_THROUGH:
            continue
        nodes = random_k_nodes.get(path)
        if not nodes or len(nodes) < 2:
            continue
        total += field_controllable_bits(nodes)
    return total


def measure_rates(k_records: list[CallRecord]) -> dict[str, float]:
    """calls/s per syscall from deltas of consecutive same-name records."""
    times: dict[str, list[int]] = {}
    for k in k_records:
        times.setdefault(k.name, []).append(k.time_ns)
    rates = {}
    for name, ts in times.items():
        deltas = [b - a for a, b in zip(ts, ts[1:]) if b > a]
        if not deltas:
            continue
        rates[name] = 1e9 / median(deltas)
    return rates
