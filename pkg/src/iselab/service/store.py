"""Append-only session persistence.

One directory per session holding events.jsonl (the authority) and
snapshot.json (a derived convenience view). Events are single JSON lines
with server timestamps; the snapshot is the canonical serialization of the
folded record, so replaying events.jsonl must reproduce snapshot.json
byte for byte.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
import uuid
from pathlib import Path

from iselab.protocol import load_word_pool
from iselab.service.flow import (
    DEFAULT_CONFIG,
    SessionRecord,
    StepRejected,
    apply_event,
    created_event_payload,
    fold_events,
    snapshot_dict,
)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def event_line(event: dict) -> str:
    return json.dumps(event, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False) + "\n"


class _Entry:
    __slots__ = ("record", "lock", "seq", "view")

    def __init__(self, record: SessionRecord, seq: int):
        self.record = record
        self.lock = threading.Lock()
        self.seq = seq
        self.view = None
        self.refresh_view()

    def refresh_view(self) -> None:
        """Immutable read-side cache; readers never touch the live record."""
        self.view = {
            "status": self.record.status,
            "step": self.record.current_step(),
            "allowed_condition": self.record.current_condition_label(),
        }


class SessionStore:
    """Disk-backed session registry with a single-writer lock per session."""

    def __init__(self, root, clock=time.time):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._clock = clock
        self._entries: dict[str, _Entry] = {}
        self._registry_lock = threading.Lock()

    # ---- paths ------------------------------------------------------------

    def session_dir(self, session_id: str) -> Path:
        return self.root / session_id

    def _events_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "events.jsonl"

    def _snapshot_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "snapshot.json"

    # ---- lifecycle ----------------------------------------------------------

    def create(self, participant: dict, seed: int, stimuli: dict,
               config: dict | None = None) -> SessionRecord:
        cfg = dict(DEFAULT_CONFIG)
        if config:
            unknown = set(config) - set(DEFAULT_CONFIG) - {"word_pool"}
            if unknown:
                raise ValueError(f"unknown config keys {sorted(unknown)}")
            cfg.update(config)
        cfg.setdefault("word_pool", list(load_word_pool()))

        with self._registry_lock:
            for created in self._scan_created():
                if (created["participant"].get("id") == participant.get("id")
                        and created["seed"] == int(seed)):
                    raise ValueError(
                        f"session for participant {participant.get('id')!r} "
                        f"with seed {seed} already exists: "
                        f"{created['session_id']}")
            session_id = uuid.uuid4().hex[:12]
            token = secrets.token_hex(16)
            payload = created_event_payload(session_id, token, participant,
                                            int(seed), stimuli, cfg)
            event = {"seq": 0, "at": self._clock(), "type": "created",
                     "payload": payload, "schema_version": 1}
            record = apply_event(None, event)
            self.session_dir(session_id).mkdir()
            self._append(session_id, event)
            self._write_snapshot(record)
            self._entries[session_id] = _Entry(record, seq=1)
            return record

    def _scan_created(self):
        """First event of every session on disk, without folding full logs."""
        for path in sorted(self.root.iterdir()):
            events = path / "events.jsonl"
            if not (path.is_dir() and events.exists()):
                continue
            with open(events) as fh:
                first = fh.readline().strip()
            if first:
                event = json.loads(first)
                if event["type"] == "created":
                    yield event["payload"]

    def _entry(self, session_id: str) -> _Entry:
        entry = self._entries.get(session_id)
        if entry is None:
            events = self.read_events(session_id)
            record = fold_events(events)
            entry = _Entry(record, seq=len(events))
            # heal a missing or stale snapshot; events are the authority
            self._write_snapshot(record)
            self._entries[session_id] = entry
        return entry

    def get(self, session_id: str) -> SessionRecord:
        if not self._events_path(session_id).exists():
            raise KeyError(f"unknown session {session_id!r}")
        return self._entry(session_id).record

    def authorize(self, session_id: str, token: str | None) -> SessionRecord:
        record = self.get(session_id)
        if token != record.token:
            raise PermissionError("invalid session token")
        return record

    def view(self, session_id: str) -> dict:
        """Latest cached read view: status, pending step, streamable condition."""
        return self._entry(session_id).view

    # ---- state changes ---------------------------------------------------------

    def submit(self, session_id: str, step_id: int, payload: dict) -> dict:
        entry = self._entry(session_id)
        with entry.lock:
            before = entry.record.cursor
            ack = entry.record.submit(step_id, payload, at=self._clock())
            if entry.record.cursor != before:  # a real state change, not a replayed ack
                event = {"seq": entry.seq, "at": entry.record.audit[-1][1],
                         "type": "step_submitted",
                         "payload": {"step_id": step_id, "payload": payload},
                         "schema_version": 1}
                self._append(session_id, event)
                entry.record.n_events += 1
                entry.seq += 1
                self._write_snapshot(entry.record)
                entry.refresh_view()
            return ack

    def abort(self, session_id: str, reason: str) -> None:
        entry = self._entry(session_id)
        with entry.lock:
            if entry.record.status in ("complete", "aborted"):
                raise StepRejected("session is finished", kind="finished")
            event = {"seq": entry.seq, "at": self._clock(), "type": "aborted",
                     "payload": {"reason": reason}, "schema_version": 1}
            apply_event(entry.record, event)
            self._append(session_id, event)
            entry.seq += 1
            self._write_snapshot(entry.record)
            entry.refresh_view()

    # ---- persistence -------------------------------------------------------------

    def _append(self, session_id: str, event: dict) -> None:
        with open(self._events_path(session_id), "a") as fh:
            fh.write(event_line(event))
            fh.flush()
            os.fsync(fh.fileno())

    def _write_snapshot(self, record: SessionRecord) -> None:
        path = self._snapshot_path(record.session_id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(canonical_json(snapshot_dict(record)))
        tmp.replace(path)

    def read_events(self, session_id: str) -> list:
        path = self._events_path(session_id)
        if not path.exists():
            raise KeyError(f"unknown session {session_id!r}")
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def replay_snapshot_text(self, session_id: str) -> str:
        """Recompute the snapshot purely from the event log (crash recovery)."""
        record = fold_events(self.read_events(session_id))
        return canonical_json(snapshot_dict(record))

    def snapshot_text(self, session_id: str) -> str:
        return self._snapshot_path(session_id).read_text()

    def list_sessions(self) -> list:
        return sorted(p.name for p in self.root.iterdir()
                      if p.is_dir() and (p / "events.jsonl").exists())
