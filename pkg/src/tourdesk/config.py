"""Runtime configuration, loadable from the environment or a JSON file."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

DATA_DIR = Path(__file__).parent / "data"

ENV_PREFIX = "TOURDESK_"


@dataclass
class Config:
    # scenario control
    loop_cap: int = 2               # re-search loops per spot slot
    interview_turn_cap: int = 5     # user turns before an interview is closed
    icebreaker_turn_cap: int = 3    # user turns before the chat moves on
    discuss_turn_cap: int = 3       # clarification turns per recommendation

    # generation
    context_window_turns: int = 8
    backend_retries: int = 2
    backend_timeout_s: float = 15.0
    backend: str = "scripted"       # "scripted" | "remote"
    script_file: str = str(DATA_DIR / "demo_script.json")
    backend_endpoint: str = ""
    backend_key: str = ""

    # catalog / metrics
    catalog_file: str = str(DATA_DIR / "kyoto_spots.json")
    threshold_km: float = 10.0

    # persistence
    storage_dir: str = "sessions"

    extras: dict = field(default_factory=dict)

    @classmethod
    def from_env(cls, env: dict[str, str] | None = None) -> "Config":
        """Build a Config from TOURDESK_* environment variables."""
        env = os.environ if env is None else env
        kwargs = {}
        for f in fields(cls):
            if f.name == "extras":
                continue
            raw = env.get(ENV_PREFIX + f.name.upper())
            if raw is None:
                continue
            kwargs[f.name] = _coerce(raw, f.type)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls) if f.name != "extras"}
        kwargs = {k: v for k, v in data.items() if k in known}
        extras = {k: v for k, v in data.items() if k not in known}
        return cls(**kwargs, extras=extras)


def _coerce(raw: str, type_name: str):
    if type_name == "int":
        return int(raw)
    if type_name == "float":
        return float(raw)
    return raw
