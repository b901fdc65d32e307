"""Multi-session host: REST + WebSocket event streaming over the agent loop.

Sessions run on worker threads; the step loop, message injection and
snapshot reads all serialize on a per-session lock, so everything a client
sees is consistent with some step boundary. Events carry gapless per-session
sequence numbers; reconnecting with ?from=<last_seq + 1> resumes without
gaps or duplicates.
"""
from __future__ import annotations

import asyncio
import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response

from .errors import SessionAborted
from .loop import ABORTED, PAUSED, RUNNING, Session, SessionConfig

logger = logging.getLogger(__name__)

EVENT_POLL_S = 0.03


@dataclass
class Event:
    seq: int
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "payload": self.payload}


class ManagedSession:
    def __init__(self, session: Session):
        self.session = session
        self.lock = threading.RLock()
        self._events: list[Event] = []
        self._elock = threading.Lock()
        self._thread: threading.Thread | None = None
        session.add_listener(self._on_event)
        self._seed_history_events()

    def _seed_history_events(self) -> None:
        """Synthesize the event history for a session loaded from disk so
        stream subscribers can still replay from seq 0."""
        for rec in self.session.history:
            t = rec["t"]
            self._on_event("step_started", {"step": t})
            self._on_event("image_ready", {"step": t, "image": rec["image"]})
            self._on_event("response_received", {"step": t, "response": rec["response"]})
            verdict = rec.get("verdict")
            if rec.get("parse_error") or (verdict and not verdict["accepted"]):
                reason = (
                    rec["parse_error"]["message"]
                    if rec.get("parse_error")
                    else verdict["rejection_reason"]
                )
                self._on_event("batch_rejected", {"step": t, "reason": reason})
            elif verdict:
                self._on_event(
                    "batch_executed",
                    {"step": t, "actions": rec["actions"],
                     "warnings": verdict["warnings"]},
                )
            for msg in rec.get("messages", []):
                self._on_event(
                    "system_message",
                    {"origin": msg["origin"], "text": msg["text"], "step": t},
                )
        self._on_event(
            "status_changed", {"status": self.session.status, "step": self.session.t}
        )

    def _on_event(self, kind: str, payload: dict) -> None:
        with self._elock:
            self._events.append(Event(len(self._events) + 1, kind, dict(payload)))

    def events_since(self, from_seq: int) -> list[Event]:
        with self._elock:
            return [e for e in self._events if e.seq >= from_seq]

    def launch(self) -> None:
        if self._thread is not None and self._thread.is_alive():
            return
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _loop(self) -> None:
        while True:
            with self.lock:
                if self.session.status != RUNNING:
                    break
                try:
                    self.session.step()
                except Exception:
                    logger.exception("session %s step failed", self.session.id)
                    self.session.abort()
                    break

    def descriptor(self) -> dict:
        s = self.session
        return {
            "id": s.id,
            "instruction": s.instruction,
            "status": s.status,
            "step": s.t,
            "max_steps": s.max_steps,
            "created_at": s.created_at,
        }

    def snapshot(self) -> dict:
        with self.lock:
            s = self.session
            steps = [
                {
                    "t": rec["t"],
                    "image": rec["image"],
                    "reason": rec.get("reason"),
                    "actions": rec.get("actions"),
                    "parse_error": rec.get("parse_error"),
                    "verdict": rec.get("verdict"),
                    "messages": rec.get("messages", []),
                }
                for rec in s.history
            ]
            return {
                **self.descriptor(),
                "objects": s.scene.summary(),
                "pending_messages": [m.to_dict() for m in s.pending],
                "latest_image": s.history[-1]["image"] if s.history else None,
                "trajectory_hash": s.history[-1]["hash"] if s.history else None,
                "scene_hash": s.scene.content_hash(),
                "steps": steps,
                "last_error": s.last_error,
            }


class SessionHost:
    """Owns all sessions under one data directory."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, ManagedSession] = {}
        self._lock = threading.Lock()
        self._load_existing()

    def _load_existing(self) -> None:
        for session_file in sorted(self.data_dir.glob("*/session.json")):
            try:
                session = Session.load(session_file.parent)
            except Exception:
                logger.exception("could not load session at %s", session_file.parent)
                continue
            managed = ManagedSession(session)
            self.sessions[session.id] = managed
            if session.status == PAUSED:
                session.resume()
            if session.status == RUNNING:
                managed.launch()

    def create(self, instruction: str, overrides: dict | None = None) -> dict:
        if not instruction or not instruction.strip():
            raise ValueError("instruction must be non-empty")
        import uuid

        config = SessionConfig.from_dict(overrides or {})
        session_id = uuid.uuid4().hex[:12]
        session = Session.create(
            instruction, config, directory=self.data_dir / session_id, session_id=session_id
        )
        managed = ManagedSession(session)
        with self._lock:
            self.sessions[session.id] = managed
        managed.launch()
        return managed.descriptor()

    def get(self, session_id: str) -> ManagedSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise KeyError(session_id) from None

    def list(self) -> list[dict]:
        return [m.descriptor() for m in self.sessions.values()]

    def post_message(self, session_id: str, text: str) -> dict:
        managed = self.get(session_id)
        with managed.lock:
            delivery_step = managed.session.inject_user_message(text)
        managed.launch()  # re-opened sessions need their loop back
        return {"delivery_step": delivery_step}

    def abort(self, session_id: str) -> dict:
        managed = self.get(session_id)
        with managed.lock:
            managed.session.abort()
        return managed.descriptor()

    def image_path(self, session_id: str, step: int) -> Path:
        managed = self.get(session_id)
        path = managed.session.directory / "steps" / f"step_{step}.png"
        if not path.exists():
            raise FileNotFoundError(path)
        return path


def create_app(host: SessionHost) -> FastAPI:
    app = FastAPI(title="sceneloom session service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.host = host

    def _managed(session_id: str) -> ManagedSession:
        try:
            return host.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")

    @app.post("/sessions")
    def create_session(body: dict):
        instruction = body.get("instruction", "")
        overrides = body.get("config", {})
        try:
            return host.create(instruction, overrides)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/sessions")
    def list_sessions():
        return host.list()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _managed(session_id).snapshot()

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: dict):
        text = body.get("text", "")
        if not text.strip():
            raise HTTPException(status_code=400, detail="message text must be non-empty")
        _managed(session_id)
        try:
            return host.post_message(session_id, text)
        except SessionAborted as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.post("/sessions/{session_id}/abort")
    def abort_session(session_id: str):
        _managed(session_id)
        return host.abort(session_id)

    @app.get("/sessions/{session_id}/steps/{step}/image")
    def step_image(session_id: str, step: int):
        managed = _managed(session_id)
        try:
            path = host.image_path(session_id, step)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail=f"no image for step {step}")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.websocket("/sessions/{session_id}/events")
    async def events(ws: WebSocket, session_id: str):
        # "from" is a reserved word, so the query param is read manually
        raw_from = ws.query_params.get("from")
        from_seq = int(raw_from) if raw_from is not None else 0
        try:
            managed = host.get(session_id)
        except KeyError:
            await ws.close(code=4404)
            return
        await ws.accept()
        next_seq = max(1, from_seq)
        try:
            while True:
                batch = managed.events_since(next_seq)
                for event in batch:
                    await ws.send_text(json.dumps(event.to_dict()))
                    next_seq = event.seq + 1
                await asyncio.sleep(EVENT_POLL_S)
        except WebSocketDisconnect:
            return

    return app


def serve(addr: str = "127.0.0.1:8023", data_dir: str = "sessions") -> None:
    import uvicorn

    host_name, _, port = addr.partition(":")
    app = create_app(SessionHost(data_dir))
    uvicorn.run(app, host=host_name or "127.0.0.1", port=int(port or 8023), log_level="info")
