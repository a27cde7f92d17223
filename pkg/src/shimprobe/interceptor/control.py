"""Control-channel handshake between the harness side and the interceptor.

One versioned JSON message sent over a local pipe before any record is
produced; carries the session id, the target pid, and any shared-region
descriptors the backend needs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


HANDSHAKE_VERSION = 1


@dataclass(frozen=True)
class ControlHandshake:
    session: str
    target_pid: int
    shared_regions: tuple[tuple[str, int], ...] = ()
    version: int = HANDSHAKE_VERSION

    def to_line(self) -> str:
        return json.dumps({
            "type": "handshake",
            "version": self.version,
            "session": self.session,
            "pid": self.target_pid,
            "regions": [list(r) for r in self.shared_regions],
        }, separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> "ControlHandshake":
        doc = json.loads(line)
        if doc.get("type") != "handshake":
            raise ValueError(f"not a handshake line: {line!r}")
        return cls(
            session=doc["session"],
            target_pid=int(doc["pid"]),
            shared_regions=tuple((str(n), int(a)) for n, a in doc.get("regions", [])),
            version=int(doc.get("version", 1)),
        )
