"""Admin API: the single steering surface for the control panel, scripts and
tests. All mutations run through the same validation paths as the config
file (catalog lookup, param schemas, settings checks).
"""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
from pathlib import Path
from typing import Any, Optional, Union

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .catalog import default_catalog
from .config import EngineConfig
from .controls import ControlsBus
from .cpu import CpuMonitor, psutil_sampler
from .engine import CategoryId, Engine, EngineSettings, TransformSpec
from .errors import RtcWrenchError, UnknownMetric, UnknownSession
from .harness import Harness, Scenario, ScenarioRunner
from .proxy import SignalProxy
from .stats import StatsEngine

log = logging.getLogger(__name__)

Primitive = Union[str, bool, int, float]


# --------------------------------------------------------------------------
# Request/response models
# --------------------------------------------------------------------------

class CategorySpecBody(BaseModel):
    builtin: str
    params: dict[str, Any] = Field(default_factory=dict)
    requested: list[str] = Field(default_factory=list)
    enabled: bool = True


class CategorySpecView(CategorySpecBody):
    category: str


class ControlWrite(BaseModel):
    value: Primitive


class ControlView(BaseModel):
    name: str
    value: Primitive
    version: int
    updated_at: float


class TriggerBody(BaseModel):
    payload: Primitive = True


class SettingsModel(BaseModel):
    strict: bool = False
    stats_interval_ms: int = 1000
    savestats_sink: Optional[str] = None
    seed: Optional[int] = None


class SessionView(BaseModel):
    id: str
    kind: str                    # proxy | stats
    detail: dict[str, Any] = Field(default_factory=dict)


class MessagesView(BaseModel):
    session_id: str
    evicted: int
    messages: list[dict[str, Any]]


class SeriesView(BaseModel):
    name: str
    unit: str
    points: list[tuple[float, float]]


class ScenarioRunView(BaseModel):
    name: str
    connection_id: str
    error: Optional[dict[str, Any]] = None
    events: int
    transcript: list[dict[str, Any]]


# --------------------------------------------------------------------------
# Service state
# --------------------------------------------------------------------------

class ServiceState:
    """Everything one running engine instance owns."""

    def __init__(self, config: Optional[EngineConfig] = None, cpu_sampler=psutil_sampler):
        self.config = config or EngineConfig()
        self.catalog = default_catalog()
        self.controls = ControlsBus()
        self.engine = Engine(self.catalog, self.controls, self.config.settings)
        self.stats = StatsEngine(sink=self.config.settings.savestats_sink)
        self.engine.extra_bindings.update({
            "send": self.stats.send,
            "query": self.stats.query_series,
            "parsequery": self.stats.query_series,
            "plot": self.stats.query_series,
            "compress": self.stats.compress,
        })
        self.proxy = SignalProxy(self.engine,
                                 fault_policy=self.config.proxy.fault_policy,
                                 header_rules=self.config.proxy.header_rules)
        self.harness = Harness(self.engine, self.stats, proxy=self.proxy,
                               default_network=self.config.harness_network,
                               default_codecs=self.config.harness_codecs)
        self.http_upstream_fn = None  # injectable; defaults to httpx per request
        self.cpu = CpuMonitor(self.engine, self.controls, sampler=cpu_sampler,
                              period_ms=self.config.cpu.period_ms)
        self._run_counter = itertools.count(1)

        for name, value in self.config.controls_initial.items():
            self.controls.set(name, value)
        for category, spec in self.config.categories.items():
            self.engine.install_transform(category, spec)

    def next_connection_id(self) -> str:
        return f"sim-{next(self._run_counter)}"


# --------------------------------------------------------------------------
# App factory
# --------------------------------------------------------------------------

def create_app(state: Optional[ServiceState] = None,
               panel_dir: Optional[str] = None) -> FastAPI:
    state = state or ServiceState()
    app = FastAPI(title="rtcwrench admin API", version="0.1.0")
    app.state.service = state

    def auth(request: Request) -> None:
        token = state.config.admin.bearer_token
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or bad bearer token")

    guarded = [Depends(auth)]

    def parse_category(category_id: str) -> CategoryId:
        try:
            return CategoryId.parse(category_id)
        except RtcWrenchError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    # -- catalog ---------------------------------------------------------------

    @app.get("/api/catalog", dependencies=guarded)
    def get_catalog(category: Optional[str] = None) -> list[dict]:
        cat = parse_category(category) if category else None
        return state.catalog.manifest(cat)

    # -- categories --------------------------------------------------------------

    @app.get("/api/categories", dependencies=guarded)
    def get_categories() -> list[CategorySpecView]:
        return [CategorySpecView(category=cat.value, builtin=spec.builtin,
                                 params=spec.params, requested=spec.requested,
                                 enabled=spec.enabled)
                for cat, spec in sorted(state.engine.installed_specs().items(),
                                        key=lambda kv: kv[0].value)]

    @app.get("/api/categories/{category_id}", dependencies=guarded)
    def get_category(category_id: str) -> CategorySpecView:
        category = parse_category(category_id)
        spec = state.engine.installed(category)
        if spec is None:
            raise HTTPException(status_code=404,
                                detail=f"no transform installed for {category.value}")
        return CategorySpecView(category=category.value, builtin=spec.builtin,
                                params=spec.params, requested=spec.requested,
                                enabled=spec.enabled)

    @app.put("/api/categories/{category_id}", dependencies=guarded)
    def put_category(category_id: str, body: CategorySpecBody) -> dict:
        category = parse_category(category_id)
        spec = TransformSpec(category=category, builtin=body.builtin,
                             params=body.params, requested=body.requested,
                             enabled=body.enabled)
        try:
            handle = state.engine.install_transform(category, spec)
        except RtcWrenchError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"handle": handle, "category": category.value}

    @app.delete("/api/categories/{category_id}", dependencies=guarded)
    def delete_category(category_id: str) -> dict:
        category = parse_category(category_id)
        return {"removed": state.engine.uninstall_transform(category)}

    # -- controls -----------------------------------------------------------------

    @app.get("/api/controls", dependencies=guarded)
    def get_controls() -> list[ControlView]:
        return [ControlView(name=e.name, value=e.value, version=e.version,
                            updated_at=e.updated_at)
                for e in state.controls.entries()]

    @app.get("/api/controls/stream", dependencies=guarded)
    async def stream_controls(request: Request) -> StreamingResponse:
        sub = state.controls.subscribe("*", capacity=4096)

        async def feed():
            try:
                while True:
                    if await request.is_disconnected():
                        return
                    event = await asyncio.to_thread(sub.next, 0.5)
                    if event is not None:
                        yield f"data: {json.dumps(event.to_doc(), sort_keys=True)}\n\n"
                    else:
                        yield ": keepalive\n\n"
            finally:
                state.controls.unsubscribe(sub)

        return StreamingResponse(feed(), media_type="text/event-stream")

    @app.get("/api/controls/{name}", dependencies=guarded)
    def get_control(name: str) -> ControlView:
        entry = state.controls.entry(name)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"control {name!r} not set")
        return ControlView(name=entry.name, value=entry.value,
                           version=entry.version, updated_at=entry.updated_at)

    @app.put("/api/controls/{name}", dependencies=guarded)
    def put_control(name: str, body: ControlWrite) -> dict:
        try:
            version = state.controls.set(name, body.value)
        except RtcWrenchError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"name": name, "version": version}

    @app.delete("/api/controls/{name}", dependencies=guarded)
    def delete_control(name: str) -> dict:
        return {"removed": state.controls.delete(name)}

    @app.post("/api/controls/{name}/trigger", dependencies=guarded)
    def trigger_control(name: str, body: TriggerBody) -> dict:
        return {"delivered": state.controls.trigger(name, body.payload)}

    # -- sessions -----------------------------------------------------------------

    @app.get("/api/sessions", dependencies=guarded)
    def get_sessions() -> list[SessionView]:
        out = [SessionView(id=s.id, kind="proxy", detail=s.to_doc())
               for s in state.proxy.sessions()]
        proxy_ids = {s.id for s in out}
        out += [SessionView(id=sid, kind="stats",
                            detail={"reports": state.stats.report_count(sid)})
                for sid in state.stats.session_ids() if sid not in proxy_ids]
        return out

    @app.get("/api/sessions/{session_id}/messages", dependencies=guarded)
    def get_messages(session_id: str, t_from: Optional[float] = None,
                     t_to: Optional[float] = None) -> MessagesView:
        try:
            records, evicted = state.proxy.export_sequence(session_id, t_from, t_to)
        except UnknownSession:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return MessagesView(session_id=session_id, evicted=evicted,
                            messages=[r.to_doc() for r in records])

    @app.get("/api/sessions/{session_id}/stats", dependencies=guarded)
    def get_session_stats(session_id: str, metric: str,
                          t_from: Optional[float] = Query(None, alias="from"),
                          t_to: Optional[float] = Query(None, alias="to")) -> SeriesView:
        try:
            series = state.stats.query_series(session_id, metric, t_from, t_to)
        except UnknownMetric as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return SeriesView(name=series.name, unit=series.unit, points=series.points)

    # -- scenarios ------------------------------------------------------------------

    @app.post("/api/scenarios/run", dependencies=guarded)
    def run_scenario(doc: dict) -> ScenarioRunView:
        try:
            scenario = Scenario.from_doc(doc)
        except (RtcWrenchError, TypeError, ValueError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=f"bad scenario: {exc}")
        connection_id = state.next_connection_id()
        runner = ScenarioRunner(state.harness, connection_id=connection_id)
        result = runner.run(scenario)
        return ScenarioRunView(name=result.name, connection_id=connection_id,
                               error=result.error, events=len(result.transcript),
                               transcript=result.transcript)

    # -- settings --------------------------------------------------------------------

    @app.get("/api/settings", dependencies=guarded)
    def get_settings() -> SettingsModel:
        s = state.engine.settings
        return SettingsModel(strict=s.strict, stats_interval_ms=s.stats_interval_ms,
                             savestats_sink=s.savestats_sink, seed=s.seed)

    @app.put("/api/settings", dependencies=guarded)
    def put_settings(body: SettingsModel) -> SettingsModel:
        try:
            settings = EngineSettings.from_doc(body.model_dump())
            state.engine.update_settings(settings)
        except RtcWrenchError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        state.stats.sink = settings.savestats_sink
        return body

    # -- HTTP forward (signal-proxy surface for Request/Security categories) -----

    if state.config.proxy.http_upstream:
        from fastapi import Response

        from .errors import UpstreamTimeout
        from .proxy import HttpRequest, HttpResponse

        def default_upstream(req: HttpRequest) -> HttpResponse:
            import httpx
            try:
                upstream = httpx.request(
                    req.method, req.url,
                    headers=[(k, v) for k, v in req.headers
                             if k.lower() not in ("host", "content-length")],
                    content=req.body, timeout=10.0)
            except httpx.TimeoutException as exc:
                raise UpstreamTimeout(str(exc)) from exc
            return HttpResponse(upstream.status_code,
                                list(upstream.headers.items()), upstream.content)

        @app.api_route("/forward/{path:path}", methods=["GET", "POST", "PUT",
                                                        "DELETE", "PATCH", "HEAD"])
        async def forward(path: str, request: Request) -> Response:
            base = state.config.proxy.http_upstream.rstrip("/")
            url = f"{base}/{path}"
            if request.url.query:
                url += f"?{request.url.query}"
            proxied = HttpRequest(request.method, url,
                                  [(k, v) for k, v in request.headers.items()],
                                  await request.body())
            upstream_fn = state.http_upstream_fn or default_upstream
            result = state.proxy.proxy_http_exchange(proxied, upstream_fn)
            if result.delay_ms > 0:
                await asyncio.sleep(result.delay_ms / 1000.0)
            response = result.response
            headers = [(k, v) for k, v in response.headers
                       if k.lower() not in ("content-length", "transfer-encoding")]
            return Response(content=response.body, status_code=response.status,
                            headers=dict(headers))

    # -- panel ------------------------------------------------------------------------

    panel = Path(panel_dir) if panel_dir else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if panel.is_dir():
        app.mount("/panel", StaticFiles(directory=str(panel), html=True), name="panel")

    return app
