"""Append-only JSONL event persistence with periodic snapshots.

One log file per session; every append is flushed to disk before the
request completes so a crash after persist never loses the interaction.
Snapshots are an optimization for loading long sessions: resuming the fold
from a snapshot must (and is tested to) agree byte-for-byte with a full
replay.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from ..errors import SessionNotFound
from .events import SessionState, project


class SessionStore:
    def __init__(self, root: str | Path, snapshot_every: int = 20):
        self.root = Path(root)
        self.sessions_dir = self.root / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.snapshot_every = snapshot_every
        self._lock = threading.Lock()
        self._student_index: dict[str, list[str]] = {}
        self._build_student_index()

    # -- paths -----------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.jsonl"

    def _snapshot_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.snapshot.json"

    # -- writes ----------------------------------------------------------

    def append(self, session_id: str, event: dict) -> None:
        line = json.dumps(event, ensure_ascii=False, sort_keys=True)
        with self._lock:
            with open(self._log_path(session_id), "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            if event["event_type"] == "session_created":
                student = event["payload"]["student_id"]
                self._student_index.setdefault(student, []).append(session_id)
        self._maybe_snapshot(session_id)

    def _maybe_snapshot(self, session_id: str) -> None:
        events = self.events(session_id)
        if len(events) > 0 and len(events) % self.snapshot_every == 0:
            state = project(events)
            self._snapshot_path(session_id).write_text(
                json.dumps({"event_count": len(events), "state": json.loads(state.to_json())}),
                encoding="utf-8",
            )

    # -- reads -----------------------------------------------------------

    def exists(self, session_id: str) -> bool:
        return self._log_path(session_id).exists()

    def events(self, session_id: str) -> list[dict]:
        path = self._log_path(session_id)
        if not path.exists():
            raise SessionNotFound(f"no session {session_id!r}")
        out = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out

    def load_state(self, session_id: str, use_snapshot: bool = True) -> SessionState:
        events = self.events(session_id)
        snap_path = self._snapshot_path(session_id)
        if use_snapshot and snap_path.exists():
            snap = json.loads(snap_path.read_text(encoding="utf-8"))
            count = snap["event_count"]
            if count <= len(events):
                base = SessionState(**snap["state"])
                return project(events[count:], initial=base)
        return project(events)

    def session_ids(self) -> list[str]:
        return sorted(p.stem for p in self.sessions_dir.glob("*.jsonl"))

    def sessions_of_student(self, student_id: str) -> list[str]:
        return list(self._student_index.get(student_id, []))

    def _build_student_index(self) -> None:
        for sid in self.session_ids():
            try:
                events = self.events(sid)
            except SessionNotFound:
                continue
            for event in events:
                if event["event_type"] == "session_created":
                    student = event["payload"]["student_id"]
                    self._student_index.setdefault(student, []).append(sid)
                    break
