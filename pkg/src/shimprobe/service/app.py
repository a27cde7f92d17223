"""Campaign service: the package's operations wrapped as HTTP endpoints.

The service owns a data directory of session artifacts; campaign runs,
replays, and re-analyses operate on sessions by id. The command-line
client talks to this app either in-process or over the network.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .. import __version__
from ..catalog import load_default_catalog
from ..errors import AttachDeniedError, PolicyError, SessionError, SfiError
from ..orchestrator import analyze, replay, run
from ..session import CampaignConfig, SessionManifest
from ..sfi import Bounds, corpus_matrix, instrument, parse_program, simulate, verify
from ..sfi.isa import format_program
from . import schemas as S


def _bounds(doc: Optional[S.BoundsModel], sections: Optional[dict] = None):
    if sections:
        return {name: Bounds(**b.model_dump()) for name, b in sections.items()}
    if doc is None:
        return Bounds()
    return Bounds(**doc.model_dump())


def create_app(data_dir: Optional[str] = None) -> FastAPI:
    base = Path(data_dir or os.environ.get("SHIMPROBE_DATA", "sessions")).resolve()
    base.mkdir(parents=True, exist_ok=True)

    app = FastAPI(title="shimprobe", version=__version__)
    app.state.data_dir = base

    def manifest_path(session: str) -> Path:
        p = base / session / "manifest.json"
        if not p.exists():
            raise HTTPException(404, f"unknown session {session!r}")
        return p

    @app.get("/health", response_model=S.HealthResponse)
    def health():
        return S.HealthResponse(status="ok", version=__version__)

    @app.get("/catalog", response_model=S.CatalogResponse)
    def catalog():
        reg = load_default_catalog()
        specs = reg.specs()
        return S.CatalogResponse(
            count=len(specs),
            core=sum(1 for s in specs if s.group == "core"),
            extra=sum(1 for s in specs if s.group == "extra"),
            syscalls=reg.names(),
            structs=reg.struct_names(),
            digest=reg.source_digest or "",
        )

    @app.post("/campaigns", response_model=S.ManifestResponse)
    def run_campaign(req: S.CampaignRequest):
        try:
            config = CampaignConfig(out_dir=str(base), **req.model_dump())
            manifest = run(config)
        except (PolicyError, SessionError, FileNotFoundError) as exc:
            raise HTTPException(400, str(exc))
        except AttachDeniedError as exc:
            raise HTTPException(403, str(exc))
        return S.ManifestResponse(**manifest.to_doc())

    @app.get("/campaigns", response_model=S.SessionListResponse)
    def list_campaigns():
        sessions = sorted(
            p.parent.name for p in base.glob("*/manifest.json")
        )
        return S.SessionListResponse(sessions=sessions)

    @app.get("/campaigns/{session}", response_model=S.ManifestResponse)
    def get_manifest(session: str):
        manifest = SessionManifest.load(manifest_path(session))
        return S.ManifestResponse(**manifest.to_doc())

    @app.get("/campaigns/{session}/report")
    def get_report(session: str, format: str = "json"):
        sdir = manifest_path(session).parent
        if format == "text":
            p = sdir / "report.txt"
            if not p.exists():
                p = sdir / "sfi_matrix.txt"
            if not p.exists():
                raise HTTPException(404, "no report for this session")
            return PlainTextResponse(p.read_text(encoding="utf-8"))
        import json as _json

        p = sdir / "report.json"
        if not p.exists():
            p = sdir / "sfi_matrix.json"
        if not p.exists():
            raise HTTPException(404, "no report for this session")
        return _json.loads(p.read_text(encoding="utf-8"))

    @app.get("/campaigns/{session}/logs/{name}")
    def get_log(session: str, name: str):
        sdir = manifest_path(session).parent
        p = sdir / name
        if not p.exists() or not p.name.endswith(".log"):
            raise HTTPException(404, f"no log {name!r}")
        return PlainTextResponse(p.read_text(encoding="utf-8"))

    @app.post("/campaigns/{session}/replay", response_model=S.ReplayResponse)
    def replay_campaign(session: str):
        return S.ReplayResponse(**replay(manifest_path(session)))

    @app.post("/campaigns/{session}/analyze", response_model=S.AnalyzeResponse)
    def analyze_campaign(session: str):
        return S.AnalyzeResponse(**analyze(manifest_path(session).parent))

    # ----- fault-isolation checking -----

    @app.post("/sfi/verify", response_model=S.SfiVerifyResponse)
    def sfi_verify(req: S.SfiVerifyRequest):
        prog = parse_program(req.program)
        verdict = verify(prog, _bounds(req.bounds, req.section_bounds))
        return S.SfiVerifyResponse(
            accept=verdict.accept,
            violations=[
                S.ViolationModel(kind=v.kind, site=v.site, detail=v.detail)
                for v in verdict.violations
            ],
        )

    @app.post("/sfi/instrument", response_model=S.SfiInstrumentResponse)
    def sfi_instrument(req: S.SfiInstrumentRequest):
        prog = parse_program(req.program)
        if prog.parse_errors:
            raise HTTPException(400, "; ".join(prog.parse_errors))
        try:
            out = instrument(prog, _bounds(req.bounds))
        except SfiError as exc:
            raise HTTPException(422, str(exc))
        return S.SfiInstrumentResponse(program=format_program(out))

    @app.post("/sfi/simulate", response_model=S.SfiSimulateResponse)
    def sfi_simulate(req: S.SfiSimulateRequest):
        prog = parse_program(req.program)
        if prog.parse_errors:
            raise HTTPException(400, "; ".join(prog.parse_errors))
        trace = simulate(prog, _bounds(req.bounds), fuel=req.fuel)
        return S.SfiSimulateResponse(
            steps=trace.steps,
            truncated=trace.truncated,
            clean=trace.clean,
            oob_stores=trace.oob_stores(),
            oob_sp_writes=trace.oob_sp_writes(),
            forbidden_ops=trace.forbidden_ops(),
        )

    @app.get("/sfi/corpus", response_model=S.SfiCorpusResponse)
    def sfi_corpus():
        return S.SfiCorpusResponse(**corpus_matrix())

    return app
