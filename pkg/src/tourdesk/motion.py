"""Maps dialogue events to timed motion commands for a robot driver or avatar.

Three rule-driven motions: nod when the user starts speaking, bow when the
system utterance opens with a greeting, look at the monitor while spot images
are on screen (with a gaze reset when they leave).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .catalog import normalize
from .config import DATA_DIR


class MotionKind(str, Enum):
    Nod = "Nod"
    Bow = "Bow"
    LookMonitor = "LookMonitor"
    LookUser = "LookUser"


class EventKind(str, Enum):
    UserSpeechStarted = "UserSpeechStarted"
    SystemUtteranceReady = "SystemUtteranceReady"
    ImagesDisplayed = "ImagesDisplayed"
    ImagesHidden = "ImagesHidden"


@dataclass(frozen=True)
class MotionCommand:
    kind: MotionKind
    at_ms: int
    duration_ms: int

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind.value, "at_ms": self.at_ms, "duration_ms": self.duration_ms},
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class DialogueEvent:
    kind: EventKind
    payload: str | None = None  # utterance text, present iff SystemUtteranceReady

    def __post_init__(self):
        has_payload = self.payload is not None
        if (self.kind is EventKind.SystemUtteranceReady) != has_payload:
            raise ValueError("payload is required exactly for SystemUtteranceReady events")


@dataclass(frozen=True)
class MotionProfile:
    nod_ms: int = 600
    bow_ms: int = 1500
    look_ms: int = 800


def load_motion_profile(path: str | Path | None = None) -> MotionProfile:
    raw = json.loads(Path(path or DATA_DIR / "motion_profile.json").read_text(encoding="utf-8"))
    return MotionProfile(**raw)


def load_greeting_lexicon(path: str | Path | None = None) -> list[str]:
    return json.loads(Path(path or DATA_DIR / "greetings.json").read_text(encoding="utf-8"))


def direct(
    event: DialogueEvent,
    state,
    greeting_lexicon: list[str],
    profile: MotionProfile | None = None,
) -> list[MotionCommand]:
    """Motion commands for one dialogue event; at most two, often none."""
    profile = profile or MotionProfile()
    if event.kind is EventKind.UserSpeechStarted:
        return [MotionCommand(MotionKind.Nod, 0, profile.nod_ms)]
    if event.kind is EventKind.ImagesDisplayed:
        return [MotionCommand(MotionKind.LookMonitor, 0, profile.look_ms)]
    if event.kind is EventKind.ImagesHidden:
        return [MotionCommand(MotionKind.LookUser, 0, profile.look_ms)]
    text = normalize(event.payload or "")
    if any(text.startswith(normalize(greeting)) for greeting in greeting_lexicon if normalize(greeting)):
        return [MotionCommand(MotionKind.Bow, 0, profile.bow_ms)]
    return []
