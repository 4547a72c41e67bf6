"""HTTP/JSON API over the session manager.

POST /sessions               {human_target, agent_target?, algorithm?, ...} -> {id, offer, ...}
GET  /sessions/{id}          -> state snapshot
POST /sessions/{id}/respond  {token, action: accept|reject|counter, counter?} -> next offer or terminal
POST /sessions/{id}/end      -> terminal snapshot with the score
GET  /sessions/{id}/transcript -> JSON lines

Offers carry a monotonically increasing token that responses must echo.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from .session import (
    SessionConfig,
    SessionError,
    SessionManager,
    StaleOfferError,
    UnknownSessionError,
)


class CreateSessionRequest(BaseModel):
    human_target: list[float]
    agent_target: list[float] | None = None
    algorithm: str | None = None
    categories: list[str] | None = None
    initial: float = 50.0
    time_limit: float = 600.0
    per_offer_timeout: float = 120.0
    offer_budget: int = 1000
    seed: int = 0


class RespondRequest(BaseModel):
    token: int
    action: str = Field(pattern="^(accept|reject|counter)$")
    counter: list[int] | None = None


def create_app(manager: SessionManager | None = None) -> FastAPI:
    manager = manager if manager is not None else SessionManager()
    app = FastAPI(title="conetrade session service")
    app.state.manager = manager

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        agent_target, algorithm = req.agent_target, req.algorithm
        if agent_target is None or algorithm is None:
            rotated_target, rotated_algorithm = manager.rotate_assignment()
            agent_target = agent_target if agent_target is not None else list(rotated_target)
            algorithm = algorithm if algorithm is not None else rotated_algorithm
        try:
            cfg = SessionConfig(
                human_target=tuple(req.human_target),
                agent_target=tuple(agent_target),
                algorithm=algorithm,
                categories=tuple(req.categories) if req.categories else ("apples", "bananas", "oranges"),
                initial=req.initial,
                time_limit=req.time_limit,
                per_offer_timeout=req.per_offer_timeout,
                offer_budget=req.offer_budget,
                seed=req.seed,
            )
        except SessionError as err:
            raise HTTPException(status_code=400, detail=str(err))
        _, snapshot = manager.create_session(cfg)
        return snapshot

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        try:
            return manager.snapshot(sid)
        except UnknownSessionError as err:
            raise HTTPException(status_code=404, detail=str(err))

    @app.post("/sessions/{sid}/respond")
    def respond(sid: str, req: RespondRequest):
        try:
            return manager.respond(sid, req.token, req.action, counter=req.counter)
        except UnknownSessionError as err:
            raise HTTPException(status_code=404, detail=str(err))
        except StaleOfferError as err:
            raise HTTPException(status_code=409, detail=str(err))
        except SessionError as err:
            raise HTTPException(status_code=400, detail=str(err))

    @app.post("/sessions/{sid}/end")
    def end_session(sid: str):
        try:
            return manager.end_session(sid)
        except UnknownSessionError as err:
            raise HTTPException(status_code=404, detail=str(err))

    @app.get("/sessions/{sid}/transcript", response_class=PlainTextResponse)
    def transcript(sid: str):
        try:
            return manager.transcript_lines(sid)
        except UnknownSessionError as err:
            raise HTTPException(status_code=404, detail=str(err))

    return app
