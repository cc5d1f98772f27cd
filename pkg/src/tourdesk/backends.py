"""Text-generation backends: a remote HTTP client and a scripted test double.

The contract is a single synchronous call. ``ScriptedBackend`` makes the whole
pipeline runnable offline: it looks up raw output by ``"<state>/turn<n>"``
where n counts backend calls made in that state for the session (responses and
keyword-extraction calls share the sequence). Missing keys return an empty
string, which downstream parsing treats as malformed and absorbs via fallback.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx


class BackendUnavailable(Exception):
    """Remote backend unreachable after retries; the turn is not committed."""


class BackendTransportError(Exception):
    """One failed transport attempt; retried before BackendUnavailable."""


@dataclass(frozen=True)
class BackendRequest:
    state_label: str
    turn_index: int  # 1-based, per state
    system_prompt: str
    user_context: str


class GenerationBackend(Protocol):
    def complete(self, request: BackendRequest) -> str:
        """Return raw model output for one request; may raise BackendTransportError."""
        ...


class ScriptedBackend:
    """Deterministic table of raw outputs keyed by "<state>/turn<n>"."""

    def __init__(self, table: dict[str, str]):
        bad = [k for k, v in table.items() if not isinstance(k, str) or not isinstance(v, str)]
        if bad:
            raise ValueError(f"script table must map str to str, offending keys: {bad[:3]}")
        self.table = dict(table)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError(f"{path}: script file must be a JSON object")
        return cls(data)

    def complete(self, request: BackendRequest) -> str:
        return self.table.get(f"{request.state_label}/turn{request.turn_index}", "")


class RemoteBackend:
    """POSTs {system_prompt, user_context} to a chat-completion shim, expects {text}."""

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        timeout_s: float = 15.0,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout_s = timeout_s
        self._client = client or httpx.Client(timeout=timeout_s)

    def complete(self, request: BackendRequest) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._client.post(
                self.endpoint,
                json={"system_prompt": request.system_prompt, "user_context": request.user_context},
                headers=headers,
                timeout=self.timeout_s,
            )
            response.raise_for_status()
            payload = response.json()
        except (httpx.HTTPError, json.JSONDecodeError) as exc:
            raise BackendTransportError(f"backend call failed: {exc}") from exc
        text = payload.get("text") if isinstance(payload, dict) else None
        return text if isinstance(text, str) else ""
