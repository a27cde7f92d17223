"""Campaign configuration and session manifests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import SessionError


STAGE_CHOICES = ("1", "1+2", "1+2+3", "sfi")


@dataclass
class CampaignConfig:
    policy: str = "null"            # preset name or policy file path
    backend: str = "mock"           # mock | tracer
    catalog: Optional[str] = None   # None = shipped catalog
    seed: int = 1
    stages: str = "1+2+3"
    method: str = "wrapper"         # wrapper | direct-trap
    out_dir: str = "sessions"
    iterations: dict = field(default_factory=lambda: {"stage1": 6, "stage2": 10, "stage3": 6})
    mutation_rules: Optional[str] = None    # optional rules file for stage 3
    service_times: Optional[str] = None
    sfi_dir: Optional[str] = None           # program dir for stages=sfi

    def __post_init__(self):
        if self.stages not in STAGE_CHOICES:
            raise SessionError(f"stages must be one of {STAGE_CHOICES}, got {self.stages!r}")
        if self.backend not in ("mock", "tracer"):
            raise SessionError(f"unknown backend {self.backend!r}")

    def to_doc(self) -> dict:
        return {
            "policy": self.policy,
            "backend": self.backend,
            "catalog": self.catalog,
            "seed": self.seed,
            "stages": self.stages,
            "method": self.method,
            "out_dir": self.out_dir,
            "iterations": dict(self.iterations),
            "mutation_rules": self.mutation_rules,
            "service_times": self.service_times,
            "sfi_dir": self.sfi_dir,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "CampaignConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in doc.items() if k in known})

    def digest(self) -> str:
        # out_dir is a workspace detail, not campaign identity
        doc = self.to_doc()
        doc.pop("out_dir")
        return sha256_text(json.dumps(doc, sort_keys=True))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class SessionManifest:
    session: str
    config: dict
    config_digest: str
    catalog_digest: str
    policy_digest: str
    started: str
    finished: str
    artifacts: dict          # name -> relative path
    artifact_digests: dict   # relative path -> sha256
    summary: dict

    def to_doc(self) -> dict:
        return {
            "session": self.session,
            "config": self.config,
            "config_digest": self.config_digest,
            "catalog_digest": self.catalog_digest,
            "policy_digest": self.policy_digest,
            "started": self.started,
            "finished": self.finished,
            "artifacts": self.artifacts,
            "artifact_digests": self.artifact_digests,
            "summary": self.summary,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "SessionManifest":
        return cls(**{k: doc[k] for k in (
            "session", "config", "config_digest", "catalog_digest", "policy_digest",
            "started", "finished", "artifacts", "artifact_digests", "summary",
        )})

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_doc(), fh, indent=2, sort_keys=False)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SessionManifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))

    def session_dir(self, manifest_path) -> Path:
        return Path(manifest_path).parent
