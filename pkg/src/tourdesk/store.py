"""Append-only JSON-lines event log, one file per session.

A turn is persisted as a group of event lines ending in a ``system_turn``
line, written with a single append. Readers treat the ``system_turn`` line as
the commit marker: a trailing group without one (or a torn last line) is
discarded, so a crash mid-turn can never surface a half-committed turn.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

COMMIT_TYPES = {"created", "system_turn"}


class StorageError(Exception):
    pass


class SessionStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create storage dir {self.root}: {exc}") from exc

    def _path(self, session_id: str) -> Path:
        if not session_id or "/" in session_id or session_id.startswith("."):
            raise StorageError(f"invalid session id {session_id!r}")
        return self.root / f"{session_id}.jsonl"

    def exists(self, session_id: str) -> bool:
        return self._path(session_id).exists()

    def list_sessions(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    def append(self, session_id: str, events: list[dict]) -> None:
        """Atomically append one committed event group."""
        if not events:
            return
        if events[-1]["type"] not in COMMIT_TYPES:
            raise StorageError(f"event group must end in a commit event, got {events[-1]['type']!r}")
        blob = "".join(json.dumps(e, ensure_ascii=False) + "\n" for e in events).encode("utf-8")
        path = self._path(session_id)
        try:
            fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
            try:
                os.write(fd, blob)
                os.fsync(fd)
            finally:
                os.close(fd)
        except OSError as exc:
            raise StorageError(f"cannot append to {path}: {exc}") from exc

    def read_events(self, session_id: str) -> list[dict]:
        """Committed events only; uncommitted trailing lines are dropped."""
        path = self._path(session_id)
        try:
            raw = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise StorageError(f"no such session: {session_id}") from None
        except OSError as exc:
            raise StorageError(f"cannot read {path}: {exc}") from exc

        events: list[dict] = []
        pending: list[dict] = []
        for line in raw.split("\n"):
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                break  # torn write; everything from here on is uncommitted
            if not isinstance(event, dict) or "type" not in event:
                break
            pending.append(event)
            if event["type"] in COMMIT_TYPES:
                events.extend(pending)
                pending = []
        return events
