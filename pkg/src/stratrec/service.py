"""HTTP chat service: live sessions over the trained planner.

Each live session runs the full turn loop on its own worker thread with a
queue-backed user agent; the API long-polls for new messages instead of
streaming. The policy checkpoint is shared read-only across sessions.

Endpoints (JSON bodies):
  POST   /v1/sessions {persona?}          -> {session_id}
  GET    /v1/sessions/{id}?wait_ms=N      -> {status, new_messages, outcome?}
  POST   /v1/sessions/{id}/messages {text}-> {accepted: true}
  DELETE /v1/sessions/{id}                -> closes the session
  GET    /v1/sessions/{id}/trace          -> per-turn strategy/reward/facts log
  GET    /healthz                         -> {ok: true}
"""

from __future__ import annotations

import os
import threading
import uuid
from dataclasses import dataclass, field
from typing import Optional

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import RunConfig, build_expert_suite, load_catalog_from
from .dialogue import DialogueState, Speaker
from .policy import PolicyParams
from .session import (
    EmptySessionError,
    LiveUser,
    SessionConfig,
    TurnOutput,
    UserExhaustedError,
    run_session,
)
from .strategies import StrategyCatalog

AWAITING_SYSTEM = "AwaitingSystem"
AWAITING_USER = "AwaitingUser"
CLOSED = "Closed"


class CreateSessionBody(BaseModel):
    persona: Optional[str] = None


class MessageBody(BaseModel):
    text: str


@dataclass
class LiveSession:
    session_id: str
    agent: LiveUser
    catalog: StrategyCatalog
    expose_strategy: bool
    status: str = AWAITING_SYSTEM
    outcome: Optional[str] = None
    messages: list[dict] = field(default_factory=list)
    delivered: int = 0
    turns: list[TurnOutput] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    changed: threading.Condition = field(init=False)
    thread: Optional[threading.Thread] = None

    def __post_init__(self) -> None:
        self.changed = threading.Condition(self.lock)

    # -- called from the worker thread ------------------------------------

    def on_awaiting_user(self, state: DialogueState) -> None:
        last = state.history[-1]
        assert last.speaker is Speaker.SYSTEM
        msg = {"speaker": "system", "text": last.text, "turn": last.turn_index}
        if self.expose_strategy and state.last_strategy is not None:
            msg["strategy_name"] = self.catalog.by_id(state.last_strategy).name
        with self.changed:
            self.messages.append(msg)
            self.status = AWAITING_USER
            self.changed.notify_all()

    def on_turn(self, out: TurnOutput) -> None:
        with self.changed:
            self.turns.append(out)

    def close(self, outcome: str) -> None:
        # first close wins; later calls keep the original outcome
        with self.changed:
            if self.status != CLOSED:
                self.status = CLOSED
                self.outcome = outcome
                self.changed.notify_all()

    # -- called from request handlers --------------------------------------

    def post_user_message(self, text: str) -> None:
        with self.changed:
            if self.status == CLOSED:
                raise HTTPException(status_code=409, detail="session is closed")
            if self.status != AWAITING_USER:
                raise HTTPException(status_code=409, detail="session is not awaiting a user message")
            turn = next((m["turn"] for m in reversed(self.messages) if m["speaker"] == "system"), 1)
            self.messages.append({"speaker": "user", "text": text, "turn": turn})
            self.status = AWAITING_SYSTEM
        self.agent.post(text)

    def poll(self, wait_ms: int) -> dict:
        deadline = wait_ms / 1000.0
        with self.changed:
            if self.delivered >= len(self.messages) and self.status != CLOSED and deadline > 0:
                self.changed.wait(timeout=deadline)
            new = self.messages[self.delivered :]
            self.delivered = len(self.messages)
            body = {"status": self.status, "new_messages": new}
            if self.outcome is not None:
                body["outcome"] = self.outcome
            return body

    def trace(self) -> list[dict]:
        with self.changed:
            rows = []
            for i, out in enumerate(self.turns, 1):
                rows.append(
                    {
                        "turn": i,
                        "strategy": out.record.strategy,
                        "strategy_name": self.catalog.by_id(out.record.strategy).name,
                        "strategy_logprob": out.record.strategy_logprob,
                        "action": out.record.action_text,
                        "user_text": out.user_text,
                        "reward": out.record.reward,
                        "terminated": out.record.terminated,
                        "preference": out.preference.text,
                        "facts": out.facts.rendered,
                    }
                )
            return rows


class SessionManager:
    def __init__(self, run_config: RunConfig, params: PolicyParams):
        self.run_config = run_config
        self.params = params
        self.catalog = load_catalog_from(run_config)
        self.sessions: dict[str, LiveSession] = {}
        self.lock = threading.Lock()
        self._counter = 0

    def _live_count(self) -> int:
        return sum(1 for s in self.sessions.values() if s.status != CLOSED)

    def create(self, persona: Optional[str]) -> LiveSession:
        with self.lock:
            if self._live_count() >= self.run_config.service.max_live_sessions:
                raise HTTPException(status_code=429, detail="live session cap reached")
            self._counter += 1
            session_id = uuid.uuid4().hex[:12]
            agent = LiveUser(reply_timeout_s=self.run_config.user.reply_timeout_s)
            live = LiveSession(
                session_id=session_id,
                agent=agent,
                catalog=self.catalog,
                expose_strategy=self.run_config.service.expose_strategy,
            )
            agent.on_awaiting = live.on_awaiting_user
            self.sessions[session_id] = live

        session_config = SessionConfig(
            catalog=self.catalog,
            experts=build_expert_suite(self.run_config),
            user=agent,
            turn_cap=self.run_config.session.turn_cap,
            gamma=self.run_config.session.gamma,
            tau=self.run_config.session.tau,
            reward_samples=self.run_config.session.reward_samples,
            rng_seed=self.run_config.session.seed + self._counter,
            pinned_context=persona or self.run_config.session.pinned_context,
        )

        def worker() -> None:
            try:
                rollout = run_session(
                    session_config,
                    self.params,
                    session_id=session_id,
                    turn_callback=live.on_turn,
                )
                live.close(rollout.trajectory.outcome.label())
            except EmptySessionError:
                live.close("closed")
            except UserExhaustedError:
                live.close("turn_cap")
            except Exception as exc:  # pragma: no cover - defensive
                live.close(f"error: {exc}")

        live.thread = threading.Thread(target=worker, name=f"session-{session_id}", daemon=True)
        live.thread.start()
        return live

    def get(self, session_id: str) -> LiveSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session id")
        return session

    def delete(self, session_id: str) -> None:
        session = self.get(session_id)
        if session.status != CLOSED:
            session.agent.close()
        if session.thread is not None:
            session.thread.join(timeout=5.0)
        session.close("closed")


def create_app(run_config: RunConfig, params: PolicyParams) -> FastAPI:
    app = FastAPI(title="stratrec chat service")
    manager = SessionManager(run_config, params)
    app.state.manager = manager

    def check_auth(request: Request) -> None:
        env = run_config.service.auth_env
        if not env:
            return
        token = os.environ.get(env, "")
        if request.headers.get("Authorization") != f"Bearer {token}" or not token:
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    @app.exception_handler(Exception)
    async def unhandled(_, exc: Exception):  # pragma: no cover - fuzz safety net
        return JSONResponse(status_code=500, content={"detail": f"internal error: {type(exc).__name__}"})

    @app.get("/healthz")
    def healthz() -> dict:
        return {"ok": True}

    @app.post("/v1/sessions")
    def create_session(body: CreateSessionBody, _=Depends(check_auth)) -> dict:
        live = manager.create(body.persona)
        return {"session_id": live.session_id}

    @app.get("/v1/sessions/{session_id}")
    def poll_session(session_id: str, wait_ms: int = 0, _=Depends(check_auth)) -> dict:
        return manager.get(session_id).poll(min(wait_ms, 30_000))

    @app.post("/v1/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody, _=Depends(check_auth)) -> dict:
        if not body.text.strip():
            raise HTTPException(status_code=422, detail="text must be non-empty")
        manager.get(session_id).post_user_message(body.text.strip())
        return {"accepted": True}

    @app.delete("/v1/sessions/{session_id}")
    def delete_session(session_id: str, _=Depends(check_auth)) -> dict:
        manager.delete(session_id)
        return {"closed": True}

    @app.get("/v1/sessions/{session_id}/trace")
    def trace(session_id: str, _=Depends(check_auth)) -> dict:
        return {"turns": manager.get(session_id).trace()}

    static_dir = run_config.service.static_dir
    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
