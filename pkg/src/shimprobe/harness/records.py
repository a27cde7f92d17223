"""Call records and the line-delimited log format.

One JSON object per line, fixed key order:

    side, session, seq, name, args, ret, time            (U side)
    side, session, seq, name, args, ret, pristine_ret,
    mutated_ret, time                                     (K side)

``ret`` is an object {"v": scalar-or-null, "fault": class-or-null,
"out": returned-value-tree-or-null}. Lines with side "meta" carry
summaries and markers; analyzers skip them except for partial-log
detection. The full schema is documented in docs/log-format.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, TextIO, Union

from ..model.encode import tree_from_json, tree_to_json
from ..model.types import Composite


@dataclass
class RetValue:
    value: Optional[int] = None
    fault: Optional[str] = None
    out: Optional[Composite] = None

    def to_doc(self) -> dict:
        return {
            "v": self.value,
            "fault": self.fault,
            "out": tree_to_json(self.out) if self.out is not None else None,
        }

    @classmethod
    def from_doc(cls, doc) -> "RetValue":
        if doc is None:
            return cls()
        out = tree_from_json(doc["out"]) if doc.get("out") else None
        return cls(doc.get("v"), doc.get("fault"), out)


@dataclass
class CallRecord:
    side: str                       # "U" | "K"
    session: str
    seq: int
    name: str
    args: Optional[Composite]
    ret: RetValue
    time_ns: int
    pristine_ret: Optional[RetValue] = None   # K side only
    mutated_ret: Optional[RetValue] = None    # K side only

    def to_line(self) -> str:
        doc = {
            "side": self.side,
            "session": self.session,
            "seq": self.seq,
            "name": self.name,
            "args": tree_to_json(self.args) if self.args is not None else None,
            "ret": self.ret.to_doc(),
        }
        if self.side == "K":
            doc["pristine_ret"] = self.pristine_ret.to_doc() if self.pristine_ret else None
            doc["mutated_ret"] = self.mutated_ret.to_doc() if self.mutated_ret else None
        doc["time"] = self.time_ns
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_doc(cls, doc: dict) -> "CallRecord":
        return cls(
            side=doc["side"],
            session=doc["session"],
            seq=doc["seq"],
            name=doc["name"],
            args=tree_from_json(doc["args"]) if doc.get("args") else None,
            ret=RetValue.from_doc(doc.get("ret")),
            time_ns=doc.get("time", 0),
            pristine_ret=RetValue.from_doc(doc["pristine_ret"]) if doc.get("pristine_ret") else None,
            mutated_ret=RetValue.from_doc(doc["mutated_ret"]) if doc.get("mutated_ret") else None,
        )


def mask_time(line: str) -> str:
    """Canonicalize a log line for replay comparison: zero time fields."""
    try:
        doc = json.loads(line)
    except json.JSONDecodeError:
        return line
    if "time" in doc:
        doc["time"] = 0
    for k in ("duration_ns", "started", "finished"):
        doc.pop(k, None)
    return json.dumps(doc, separators=(",", ":"))


class LogWriter:
    def __init__(self, path: Union[str, Path], session: str):
        self.path = Path(path)
        self.session = session
        self._fh: Optional[TextIO] = open(self.path, "w", encoding="utf-8")
        self._count = 0

    def write_record(self, rec: CallRecord) -> None:
        self._fh.write(rec.to_line() + "\n")
        self._count += 1

    def write_meta(self, kind: str, **fields) -> None:
        doc = {"side": "meta", "session": self.session, "type": kind}
        doc.update(fields)
        self._fh.write(json.dumps(doc, separators=(",", ":")) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LogReader:
    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def records(self) -> Iterator[CallRecord]:
        for doc in self.lines():
            if doc.get("side") in ("U", "K"):
                yield CallRecord.from_doc(doc)

    def metas(self) -> Iterator[dict]:
        for doc in self.lines():
            if doc.get("side") == "meta":
                yield doc

    def lines(self) -> Iterator[dict]:
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)

    def is_partial(self) -> bool:
        return any(m.get("type") == "partial" for m in self.metas())
