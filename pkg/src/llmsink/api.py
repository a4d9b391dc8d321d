"""HTTP control plane for the sinkhole service.

Read endpoints (status, query feed, verdicts, subscription document)
are public and never mutate state; the window and override mutations
require the shared bearer token. The dashboard's static bundle, when
configured, is served from the same process.
"""

from __future__ import annotations

import hashlib
from datetime import datetime
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request, Response
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .blocklist import InvalidWindow, ListParseError
from .classifier import VerdictValue
from .domains import InvalidDomain, canonicalize_domain
from .resolver import query_record_to_json
from .service import ServiceState

__all__ = ["create_app"]


class WindowModel(BaseModel):
    start: datetime
    end: datetime


class StatusResponse(BaseModel):
    queries_total: int
    queries_blocked: int
    active_entries: int
    current_window: WindowModel | None
    uptime_secs: float


class QueryRecordResponse(BaseModel):
    timestamp: datetime
    client: str
    qname: str
    qtype: int
    outcome: str
    upstream_used: str | None
    matched_entry: str | None


class VerdictResponse(BaseModel):
    verdict_id: str
    verdict: str
    reason: str
    model_id: str
    latency_ms: float
    dossier_url: str
    created_at: datetime
    block_status: str = Field(description="blocked | overridden | pending | none")


class WindowRequest(BaseModel):
    tag: str
    start: datetime | None = None
    end: datetime | None = None


class WindowResponse(BaseModel):
    tag: str
    affected: int
    window: WindowModel | None


class OverrideRequest(BaseModel):
    domain: str
    action: str = Field(pattern="^(whitelist|unwhitelist|block)$")


class OverrideResponse(BaseModel):
    domain: str
    action: str
    blocked: bool
    whitelisted: bool


class ImportRequest(BaseModel):
    tag: str
    document: str


class ImportResponse(BaseModel):
    tag: str
    added: int
    deactivated: int
    active: int


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="llmsink control API", version="0.1.0")
    app.state.service = state

    if state.config.api.cors_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=[state.config.api.cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    def require_token(authorization: str | None = Header(default=None)) -> None:
        expected = f"Bearer {state.config.api.token}"
        if not state.config.api.token or authorization != expected:
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    @app.get("/api/status", response_model=StatusResponse)
    def get_status() -> StatusResponse:
        now = state.resolver.clock()
        window = state.store.tag_window(state.config.tag)
        return StatusResponse(
            queries_total=state.resolver.queries_total,
            queries_blocked=state.resolver.queries_blocked,
            active_entries=state.store.snapshot.active_count(now),
            current_window=WindowModel(start=window[0], end=window[1]) if window else None,
            uptime_secs=(now - state.started_at).total_seconds(),
        )

    @app.get("/api/queries", response_model=list[QueryRecordResponse])
    def get_queries(
        since: datetime | None = Query(default=None),
        limit: int = Query(default=100, ge=1),
    ) -> list[QueryRecordResponse]:
        if limit > state.config.api.max_page_size:
            raise HTTPException(
                status_code=400,
                detail=f"limit exceeds max page size {state.config.api.max_page_size}",
            )
        rows = state.query_log.records(since=since, limit=limit)
        return [QueryRecordResponse(**query_record_to_json(r)) for r in rows]

    def _block_status(domain_url: str, verdict: VerdictValue) -> str:
        try:
            domain = canonicalize_domain(domain_url)
        except InvalidDomain:
            return "none"
        now = state.resolver.clock()
        if any(w.domain == domain for w in state.store.whitelist_entries()):
            return "overridden"
        if state.store.is_blocked(domain, now) is not None:
            return "blocked"
        if verdict == VerdictValue.YES:
            return "pending"
        return "none"

    @app.get("/api/verdicts", response_model=list[VerdictResponse])
    def get_verdicts(status: str = Query(default="all", pattern="^(all|pending)$")) -> list[VerdictResponse]:
        rows = []
        for verdict in state.verdicts.all():
            block_status = _block_status(verdict.dossier_url, verdict.verdict)
            if status == "pending" and block_status != "pending":
                continue
            rows.append(
                VerdictResponse(
                    verdict_id=verdict.verdict_id,
                    verdict=verdict.verdict.value,
                    reason=verdict.reason,
                    model_id=verdict.model_id,
                    latency_ms=verdict.latency_ms,
                    dossier_url=verdict.dossier_url,
                    created_at=verdict.created_at,
                    block_status=block_status,
                )
            )
        return rows

    @app.post("/api/window", response_model=WindowResponse, dependencies=[Depends(require_token)])
    def post_window(body: WindowRequest) -> WindowResponse:
        if (body.start is None) != (body.end is None):
            raise HTTPException(status_code=400, detail="start and end must be set together")
        window = (body.start, body.end) if body.start else None
        try:
            affected = state.store.set_tag_window(body.tag, window)
        except InvalidWindow as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return WindowResponse(
            tag=body.tag,
            affected=affected,
            window=WindowModel(start=window[0], end=window[1]) if window else None,
        )

    @app.post("/api/override", response_model=OverrideResponse, dependencies=[Depends(require_token)])
    def post_override(body: OverrideRequest) -> OverrideResponse:
        try:
            domain = canonicalize_domain(body.domain)
            if body.action == "whitelist":
                state.store.whitelist_override(domain, reason="operator override")
            elif body.action == "unwhitelist":
                state.store.remove_whitelist(domain)
            else:
                state.store.add_entry(domain, state.config.tag)
        except InvalidDomain as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        now = state.resolver.clock()
        return OverrideResponse(
            domain=domain,
            action=body.action,
            blocked=state.store.is_blocked(domain, now) is not None,
            whitelisted=any(w.domain == domain for w in state.store.whitelist_entries()),
        )

    @app.post("/api/import", response_model=ImportResponse, dependencies=[Depends(require_token)])
    def post_import(body: ImportRequest) -> ImportResponse:
        try:
            added, deactivated = state.store.import_list(body.document, body.tag)
        except ListParseError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        active = sum(1 for e in state.store.entries(body.tag) if e.active)
        return ImportResponse(tag=body.tag, added=added, deactivated=deactivated, active=active)

    @app.get("/lists/{slug}.txt", response_class=PlainTextResponse)
    def get_subscription(slug: str, request: Request) -> Response:
        tag = _tag_for_slug(state, slug)
        if tag is None:
            raise HTTPException(status_code=404, detail=f"no list for {slug!r}")
        body = state.store.export_list(tag)
        # Validator covers the list content, not the generation timestamp,
        # so pollers can skip truly unchanged lists.
        content = "\n".join(
            line for line in body.splitlines() if not line.startswith("# generated:")
        )
        etag = '"' + hashlib.sha256(content.encode()).hexdigest() + '"'
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304, headers={"ETag": etag})
        return PlainTextResponse(body, headers={"ETag": etag})

    dashboard_dir = state.config.api.dashboard_dir
    if dashboard_dir and Path(dashboard_dir).is_dir():
        app.mount("/", StaticFiles(directory=dashboard_dir, html=True), name="dashboard")

    return app


def _tag_for_slug(state: ServiceState, slug: str) -> str | None:
    """Map a URL slug back to a tag, case-insensitively."""
    candidates = {state.config.tag}
    candidates.update(e.tag for e in state.store.entries())
    for tag in sorted(candidates):
        if tag.lower() == slug.lower():
            return tag
    return None
