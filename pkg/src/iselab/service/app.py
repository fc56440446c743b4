"""HTTP surface of the session service.

POST /sessions                          create a session (returns id + token)
GET  /sessions/{id}/next                pending step descriptor (idempotent)
POST /sessions/{id}/steps/{step_id}     submit the pending step
GET  /sessions/{id}/stimuli/{label}     ranged WAV streaming for the active condition
GET  /sessions/{id}/export              analysis-ready bundle once finished
POST /sessions/{id}/abort               abandon the session

All session endpoints (except create) require the x-session-token header
issued at creation. Bodies and responses carry schema_version.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from pathlib import Path

from fastapi import Body, FastAPI, Header, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from iselab.service.flow import SCHEMA_VERSION, StepRejected
from iselab.service.store import SessionStore

_RANGE = re.compile(r"bytes=(\d*)-(\d*)$")


def scan_stimuli(stimuli_dir) -> dict:
    """Index condition WAVs (and their manifests when present) by label."""
    root = Path(stimuli_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"stimuli directory {stimuli_dir} does not exist")
    found = {}
    for wav in sorted(root.glob("*.wav")):
        label = wav.stem
        info = {"wav": wav.name, "bytes": wav.stat().st_size}
        manifest = wav.with_suffix(".json")
        if manifest.exists():
            data = json.loads(manifest.read_text())
            info["sha256_float32"] = data.get("output", {}).get("sha256_float32")
            info["achieved_sti"] = data.get("achieved_sti")
        found[label] = info
    return found


def create_app(sessions_dir, stimuli_dir, clock=time.time) -> FastAPI:
    store = SessionStore(sessions_dir, clock=clock)
    stimuli = scan_stimuli(stimuli_dir)
    stimuli_root = Path(stimuli_dir)

    app = FastAPI(title="iselab session service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    app.state.store = store
    app.state.stimuli = stimuli

    def _auth(session_id: str, token: str | None):
        try:
            return store.authorize(session_id, token)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id!r}")
        except PermissionError:
            raise HTTPException(403, "invalid session token")

    @app.get("/health")
    def health():
        return {"ok": True, "conditions": sorted(stimuli),
                "schema_version": SCHEMA_VERSION}

    @app.post("/sessions", status_code=201)
    def create_session(body: dict = Body(...)):
        participant = body.get("participant")
        if not isinstance(participant, dict):
            raise HTTPException(422, "body needs a participant object")
        seed = body.get("seed", 0)
        if not isinstance(seed, int):
            raise HTTPException(422, "seed must be an integer")
        config = body.get("config")
        if config is not None and not isinstance(config, dict):
            raise HTTPException(422, "config must be an object")
        try:
            record = store.create(participant, seed, stimuli, config)
        except ValueError as exc:
            status = 409 if "already exists" in str(exc) else 422
            raise HTTPException(status, str(exc))
        return {"session_id": record.session_id, "token": record.token,
                "status": record.status, "schema_version": SCHEMA_VERSION}

    @app.get("/sessions/{session_id}/next")
    def next_step(session_id: str,
                  x_session_token: str | None = Header(default=None)):
        _auth(session_id, x_session_token)
        view = store.view(session_id)
        return {"status": view["status"], "step": view["step"],
                "schema_version": SCHEMA_VERSION}

    @app.post("/sessions/{session_id}/steps/{step_id}")
    def submit_step(session_id: str, step_id: int, body: dict = Body(...),
                    x_session_token: str | None = Header(default=None)):
        _auth(session_id, x_session_token)
        payload = body.get("payload")
        if not isinstance(payload, dict):
            raise HTTPException(422, "body needs a payload object")
        try:
            return store.submit(session_id, step_id, payload)
        except StepRejected as exc:
            code = {"out-of-order": 409, "finished": 409}.get(exc.kind, 422)
            raise HTTPException(code, str(exc))

    @app.get("/sessions/{session_id}/stimuli/{label}")
    def stream_stimulus(session_id: str, label: str, request: Request,
                        x_session_token: str | None = Header(default=None)):
        _auth(session_id, x_session_token)
        if label not in stimuli:
            raise HTTPException(404, f"no stimulus {label!r}")
        allowed = store.view(session_id)["allowed_condition"]
        if label != allowed:
            raise HTTPException(
                409, f"condition {label!r} is not active"
                     + (f" (current: {allowed!r})" if allowed else ""))
        path = stimuli_root / stimuli[label]["wav"]
        total = path.stat().st_size
        headers = {"accept-ranges": "bytes"}
        checksum = stimuli[label].get("sha256_float32")
        if checksum:
            headers["etag"] = f'"{checksum}"'

        range_header = request.headers.get("range")
        if range_header is None:
            return Response(path.read_bytes(), media_type="audio/wav",
                            headers=headers)
        m = _RANGE.match(range_header.strip())
        if not m or (not m.group(1) and not m.group(2)):
            raise HTTPException(416, "malformed range",
                                headers={"content-range": f"bytes */{total}"})
        if m.group(1):
            start = int(m.group(1))
            end = int(m.group(2)) if m.group(2) else total - 1
        else:  # suffix form: last N bytes
            start = max(0, total - int(m.group(2)))
            end = total - 1
        if start >= total or end < start:
            raise HTTPException(416, "range not satisfiable",
                                headers={"content-range": f"bytes */{total}"})
        end = min(end, total - 1)
        with open(path, "rb") as fh:
            fh.seek(start)
            chunk = fh.read(end - start + 1)
        headers["content-range"] = f"bytes {start}-{end}/{total}"
        return Response(chunk, status_code=206, media_type="audio/wav",
                        headers=headers)

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str,
                       x_session_token: str | None = Header(default=None)):
        record = _auth(session_id, x_session_token)
        try:
            return record.export_bundle()
        except StepRejected as exc:
            raise HTTPException(409, str(exc))

    @app.post("/sessions/{session_id}/abort")
    def abort_session(session_id: str, body: dict = Body(default={}),
                      x_session_token: str | None = Header(default=None)):
        _auth(session_id, x_session_token)
        reason = body.get("reason", "aborted by client")
        if not isinstance(reason, str):
            raise HTTPException(422, "reason must be a string")
        try:
            store.abort(session_id, reason)
        except StepRejected as exc:
            raise HTTPException(409, str(exc))
        return {"status": "aborted", "schema_version": SCHEMA_VERSION}

    return app
