"""Retrieval service: session registry plus the HTTP app around it.

RetrievalService owns one scored repository, one shared negative pool, and a
registry of live query sessions. The FastAPI layer in create_app is a thin
JSON mapping over the service object; all behavior lives here so tests can
drive the service directly.
"""

import dataclasses
import secrets
import threading
import time
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    QueryResolutionError,
    RetrievalError,
    SessionLimitError,
    SessionNotFoundError,
)
from .ranker import RankerConfig, Repository
from .session import (
    DEFAULT_FEED_RATE,
    DEFAULT_STEPS_PER_SECOND,
    QuerySession,
    SessionConfig,
    WallRunner,
    run_simulated,
)
from .store import FeatureStore
from .trainer import TrainerConfig

CLOCK_WALL = "wall"
CLOCK_SIMULATED = "simulated"


@dataclasses.dataclass(frozen=True)
class ServiceConfig:
    """Service-wide defaults; per-session overrides are limited to rate and k."""

    rate: float = DEFAULT_FEED_RATE
    k: int = 100
    interval: float = 0.18
    trainer: TrainerConfig = dataclasses.field(
        default_factory=lambda: TrainerConfig(lam=0.02, batch_size=32)
    )
    steps_per_second: float = DEFAULT_STEPS_PER_SECOND
    max_sessions: int = 8
    session_ttl: float = 300.0
    clock: str = CLOCK_WALL
    sim_duration: float = 6.0
    seed: int = 0

    def validate(self) -> None:
        if self.clock not in (CLOCK_WALL, CLOCK_SIMULATED):
            raise ConfigError(f"clock must be wall or simulated, got {self.clock!r}")
        if self.max_sessions < 1:
            raise ConfigError(f"max_sessions must be >= 1, got {self.max_sessions}")
        if self.session_ttl < 0:
            raise ConfigError(f"session_ttl must be >= 0, got {self.session_ttl}")
        if self.sim_duration <= 0:
            raise ConfigError(f"sim_duration must be positive, got {self.sim_duration}")


@dataclasses.dataclass
class _SessionRecord:
    session: QuerySession
    runner: WallRunner | None
    created_epoch: float
    stopped_mono: float | None = None


class RetrievalService:
    """Registry of query sessions over one repository and negative pool."""

    def __init__(
        self,
        repository: Repository,
        negatives: FeatureStore | np.ndarray,
        source,
        cfg: ServiceConfig | None = None,
    ):
        self.cfg = cfg if cfg is not None else ServiceConfig()
        self.cfg.validate()
        self.repository = repository
        self.source = source
        raw = negatives.data if isinstance(negatives, FeatureStore) else np.asarray(negatives, dtype=np.float32)
        self._negatives = repository.adapt_training_vectors(raw)
        self._records: dict[str, _SessionRecord] = {}
        self._created_count = 0
        self._lock = threading.Lock()

    # -- registry ------------------------------------------------------------

    def _evict_expired(self, now_mono: float) -> None:
        expired = [
            sid
            for sid, rec in self._records.items()
            if rec.stopped_mono is not None and now_mono - rec.stopped_mono >= self.cfg.session_ttl
        ]
        for sid in expired:
            del self._records[sid]

    def _get_record(self, session_id: str) -> _SessionRecord:
        with self._lock:
            self._evict_expired(time.monotonic())
            rec = self._records.get(session_id)
            if rec is None:
                raise SessionNotFoundError(f"no session {session_id!r}")
            return rec

    def session_count(self) -> int:
        with self._lock:
            return len(self._records)

    # -- lifecycle -----------------------------------------------------------

    def create_session(self, query: str, rate: float | None = None, k: int | None = None) -> QuerySession:
        """Register and start a session; resolution failure yields a failed one.

        Rejects with SessionLimitError once max_sessions sessions are live.
        """
        session_cfg = SessionConfig(
            rate=self.cfg.rate if rate is None else rate,
            ranker=RankerConfig(k=self.cfg.k if k is None else k, interval=self.cfg.interval),
            trainer=self.cfg.trainer,
            steps_per_second=self.cfg.steps_per_second,
        )
        session_cfg.validate()
        with self._lock:
            now_mono = time.monotonic()
            self._evict_expired(now_mono)
            live = sum(1 for rec in self._records.values() if rec.session.is_live)
            if live >= self.cfg.max_sessions:
                raise SessionLimitError(f"session limit of {self.cfg.max_sessions} reached")
            session_id = secrets.token_urlsafe(16)
            trainer_seed = self.cfg.seed + self._created_count
            self._created_count += 1
            session = QuerySession(
                session_id,
                query,
                self.repository,
                self._negatives,
                session_cfg,
                trainer_seed=trainer_seed,
            )
            record = _SessionRecord(session, runner=None, created_epoch=time.time())
            try:
                feed = self.source.resolve(query)
            except QueryResolutionError as exc:
                session.mark_failed(str(exc))
                record.stopped_mono = now_mono
                self._records[session_id] = record
                return session
            if self.cfg.clock == CLOCK_SIMULATED:
                run_simulated(session, feed.vectors, self.cfg.sim_duration)
                record.stopped_mono = time.monotonic()
            else:
                record.runner = WallRunner(session, feed.vectors)
                record.runner.start()
            self._records[session_id] = record
            return session

    def stop_session(self, session_id: str) -> dict:
        """Halt a session's feeding, training, and publishing; idempotent."""
        rec = self._get_record(session_id)
        if rec.runner is not None:
            rec.runner.stop()
            rec.runner = None
        else:
            rec.session.mark_stopped(time.monotonic())
        with self._lock:
            if rec.stopped_mono is None:
                rec.stopped_mono = time.monotonic()
        return self.session_stats(session_id)

    # -- readers -------------------------------------------------------------

    def session_stats(self, session_id: str) -> dict:
        rec = self._get_record(session_id)
        session = rec.session
        pub = session.latest_publication()
        stats = session.stats()
        return {
            "id": session.id,
            "state": session.state,
            "positives_fed": stats["positives_fed"],
            "steps_applied": stats["steps_applied"],
            "lists_published": stats["lists_published"],
            "model_version": 0 if pub is None else pub.ranked.model_version,
        }

    def session_metadata(self, session_id: str) -> dict:
        rec = self._get_record(session_id)
        payload = self.session_stats(session_id)
        payload["query"] = rec.session.query_text
        payload["created_at"] = rec.created_epoch
        if rec.session.failure is not None:
            payload["failure"] = rec.session.failure
        return payload

    def get_results(self, session_id: str, limit: int | None = None) -> dict:
        """Latest published list as a JSON-ready payload.

        The entry list, model_version, and positives_fed all come from the
        same publication, so repeated calls between publications return
        identical payloads.
        """
        rec = self._get_record(session_id)
        session = rec.session
        if limit is not None and limit < 0:
            raise ConfigError(f"limit must be >= 0, got {limit}")
        pub = session.latest_publication()
        if pub is None:
            return {
                "state": session.state,
                "model_version": 0,
                "positives_fed": 0,
                "entries": [],
            }
        ranked = pub.ranked
        count = len(ranked.ids) if limit is None else min(limit, len(ranked.ids))
        entries = []
        for i in range(count):
            entry = {"id": int(ranked.ids[i]), "score": float(ranked.scores[i])}
            if ranked.names is not None:
                entry["name"] = ranked.names[i]
            entries.append(entry)
        return {
            "state": session.state,
            "model_version": int(ranked.model_version),
            "positives_fed": int(pub.positives_fed),
            "entries": entries,
        }

    def health(self) -> dict:
        return {
            "repository_count": self.repository.count,
            "dim": self.repository.feature_dim,
            "representation": self.repository.kind,
        }

    def shutdown(self) -> None:
        with self._lock:
            sids = list(self._records)
        for sid in sids:
            try:
                self.stop_session(sid)
            except SessionNotFoundError:
                pass


# -- HTTP layer ---------------------------------------------------------------

def create_app(service: RetrievalService, ui_dir: str | Path | None = None):
    """Wrap a RetrievalService in the JSON-over-HTTP app."""
    from fastapi import FastAPI, Query, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    app = FastAPI(title="on-the-fly retrieval", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = service

    def error_body(code: str, message: str) -> dict:
        return {"error": {"code": code, "message": message}}

    @app.exception_handler(SessionNotFoundError)
    async def _not_found(request: Request, exc: SessionNotFoundError):
        return JSONResponse(status_code=404, content=error_body("session_not_found", str(exc)))

    @app.exception_handler(SessionLimitError)
    async def _limit(request: Request, exc: SessionLimitError):
        return JSONResponse(status_code=429, content=error_body("session_limit", str(exc)))

    @app.exception_handler(ConfigError)
    async def _bad_config(request: Request, exc: ConfigError):
        return JSONResponse(status_code=400, content=error_body("invalid_request", str(exc)))

    @app.exception_handler(RetrievalError)
    async def _retrieval(request: Request, exc: RetrievalError):
        return JSONResponse(status_code=500, content=error_body("internal", str(exc)))

    @app.exception_handler(RequestValidationError)
    async def _validation(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content=error_body("invalid_request", str(exc)))

    class SessionCreate(BaseModel):
        query: str
        rate: float | None = None
        k: int | None = None

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: SessionCreate):
        session = service.create_session(body.query, rate=body.rate, k=body.k)
        return {"id": session.id, "state": session.state}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        return service.session_metadata(session_id)

    @app.get("/v1/sessions/{session_id}/results")
    def get_results(session_id: str, limit: int | None = Query(default=None, ge=0)):
        return service.get_results(session_id, limit=limit)

    @app.post("/v1/sessions/{session_id}/stop")
    def stop_session(session_id: str):
        return service.stop_session(session_id)

    @app.get("/v1/health")
    def health():
        return service.health()

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
