"""HTTP API over sessions: turns, uploads, events, node access, edits, re-runs.

Event delivery is a server-push stream of JSON envelopes ``{seq, type,
payload}`` (one ``data:`` line each); clients resume from any point with
``?after=<seq>``.  Turns run synchronously, so after a turn responds, the
full event backlog for it is available on the stream.
"""

from __future__ import annotations

import json
import os
import uuid

from fastapi import FastAPI, HTTPException, Request, UploadFile
from fastapi.responses import PlainTextResponse, StreamingResponse
from pydantic import BaseModel

from .edits import ParamEdit
from .errors import (
    FlowlensError,
    RewriteRejectedError,
    StaleSpanError,
    UnknownNodeError,
)
from .llm import LlmClientConfig
from .session import Session, SessionConfig


class SessionManager:
    def __init__(self, root: str, config: SessionConfig | None = None):
        self.root = root
        self.config = config or SessionConfig(llm=LlmClientConfig.from_env())
        self.sessions: dict[str, Session] = {}

    def create(self) -> Session:
        session_id = uuid.uuid4().hex[:12]
        session = Session(session_id, os.path.join(self.root, session_id),
                          self.config)
        self.sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"no session {session_id}")
        return session

    def close_all(self) -> None:
        for session in self.sessions.values():
            session.close()


class TurnBody(BaseModel):
    message: str | None = None
    raw_code: str | None = None


class EditBody(BaseModel):
    node_id: str
    param_name: str
    new_value: str


class QueryBody(BaseModel):
    question: str


def _http_error(exc: FlowlensError) -> HTTPException:
    if isinstance(exc, UnknownNodeError):
        return HTTPException(404, str(exc))
    if isinstance(exc, (StaleSpanError, RewriteRejectedError)):
        return HTTPException(409, str(exc))
    return HTTPException(400, str(exc))


def create_app(manager: SessionManager) -> FastAPI:
    app = FastAPI(title="flowlens", version="0.1.0")
    app.state.manager = manager

    @app.post("/sessions")
    def create_session():
        session = manager.create()
        return {"session_id": session.session_id}

    @app.post("/sessions/{sid}/files")
    async def upload(sid: str, file: UploadFile):
        session = manager.get(sid)
        data = await file.read()
        path = session.write_upload(file.filename or "upload.bin", data)
        return {"name": os.path.basename(path)}

    @app.post("/sessions/{sid}/turns")
    def run_turn(sid: str, body: TurnBody):
        session = manager.get(sid)
        if body.message is None and body.raw_code is None:
            raise HTTPException(422, "provide message or raw_code")
        try:
            return session.run_turn(message=body.message, raw_code=body.raw_code)
        except FlowlensError as exc:
            raise _http_error(exc)

    @app.get("/sessions/{sid}/events")
    def events(sid: str, after: int = -1):
        session = manager.get(sid)

        def stream():
            for envelope in session.events_after(after):
                yield f"data: {json.dumps(envelope, separators=(',', ':'))}\n\n"

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/sessions/{sid}/snippets/{snippet_id}/graph")
    def snippet_graph(sid: str, snippet_id: str, format: str = "graph-json",
                      runtime: bool = True):
        session = manager.get(sid)
        try:
            exported = session.export_graph(snippet_id, format, runtime=runtime)
        except FlowlensError as exc:
            raise _http_error(exc)
        if format == "dot":
            return PlainTextResponse(exported)
        return PlainTextResponse(exported, media_type="application/json")

    @app.get("/sessions/{sid}/nodes/{node_id}")
    def node_details(sid: str, node_id: str, rows: int | None = None):
        session = manager.get(sid)
        try:
            return session.node_details(node_id, preview_rows=rows)
        except FlowlensError as exc:
            raise _http_error(exc)

    @app.post("/sessions/{sid}/nodes/{node_id}/edit")
    def edit_node(sid: str, node_id: str, body: EditBody):
        session = manager.get(sid)
        if body.node_id != node_id:
            raise HTTPException(422, "node_id mismatch between path and body")
        try:
            return session.edit_node_param(
                ParamEdit(body.node_id, body.param_name, body.new_value)
            )
        except FlowlensError as exc:
            raise _http_error(exc)

    @app.post("/sessions/{sid}/nodes/{node_id}/query")
    def query_node(sid: str, node_id: str, body: QueryBody):
        session = manager.get(sid)
        try:
            return session.node_query(node_id, body.question)
        except FlowlensError as exc:
            raise _http_error(exc)

    @app.post("/sessions/{sid}/snippets/{snippet_id}/rerun")
    def rerun(sid: str, snippet_id: str):
        session = manager.get(sid)
        try:
            return session.rerun_snippet(snippet_id)
        except FlowlensError as exc:
            raise _http_error(exc)

    @app.get("/sessions/{sid}/minimap")
    def minimap(sid: str):
        session = manager.get(sid)
        return session.minimap()

    return app
