"""Request/response models for the campaign service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class CatalogResponse(BaseModel):
    count: int
    core: int
    extra: int
    syscalls: list[str]
    structs: list[str]
    digest: str


class CampaignRequest(BaseModel):
    policy: str = "null"                 # preset name or server-visible path
    backend: str = "mock"
    stages: str = "1+2+3"
    seed: int = 1
    method: str = "wrapper"
    catalog: Optional[str] = None
    mutation_rules: Optional[str] = None
    service_times: Optional[str] = None
    iterations: dict[str, int] = Field(
        default_factory=lambda: {"stage1": 6, "stage2": 10, "stage3": 6}
    )


class ManifestResponse(BaseModel):
    session: str
    config: dict
    config_digest: str
    catalog_digest: str
    policy_digest: str
    started: str
    finished: str
    artifacts: dict[str, str]
    artifact_digests: dict[str, str]
    summary: dict


class SessionListResponse(BaseModel):
    sessions: list[str]


class ReplayResponse(BaseModel):
    verdict: str
    reason: Optional[str] = None
    divergences: Optional[list[dict]] = None
    session: Optional[str] = None
    note: Optional[str] = None


class AnalyzeResponse(BaseModel):
    report: dict
    oracle_mismatches: list[str]


class BoundsModel(BaseModel):
    lower: int = 0x3FFF_0000_0000
    upper: int = 0x4FFF_0000_0000
    code_lower: int = 0
    code_upper: int = 1 << 20


class SfiVerifyRequest(BaseModel):
    program: str
    bounds: Optional[BoundsModel] = None
    section_bounds: Optional[dict[str, BoundsModel]] = None


class ViolationModel(BaseModel):
    kind: str
    site: int
    detail: str = ""


class SfiVerifyResponse(BaseModel):
    accept: bool
    violations: list[ViolationModel]


class SfiInstrumentRequest(BaseModel):
    program: str
    bounds: Optional[BoundsModel] = None


class SfiInstrumentResponse(BaseModel):
    program: str


class SfiSimulateRequest(BaseModel):
    program: str
    bounds: Optional[BoundsModel] = None
    fuel: int = 1000


class SfiSimulateResponse(BaseModel):
    steps: int
    truncated: bool
    clean: bool
    oob_stores: list[int]
    oob_sp_writes: list[int]
    forbidden_ops: list[int]


class SfiCorpusResponse(BaseModel):
    rows: list[dict]
    functionalities: dict[str, bool]
    all_pass: bool
