"""Scripted persona simulation: batch sessions for the plan metric.

A persona drives both sides of the consultation deterministically under a
seed. The user side picks utterances from per-state tables; the system side is
a backend double that emits acts by policy (how long to chat and interview,
and with what probability to reject all three recommendations). Keyword
requests intentionally return nothing so extraction exercises the rule-based
lexicon fallback over the persona's own interview utterances.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .backends import BackendRequest
from .generation import KEYWORD_INSTRUCTIONS
from .orchestrator import MetricsReport, Orchestrator, compute_metrics
from .scenario import ScenarioState

S = ScenarioState

DEFAULT_UTTERANCES: dict[str, list[str]] = {
    "Icebreaker": ["こんにちは", "京都は初めてです"],
    "Interview1": ["静かなお寺と庭園が見たいです"],
    "ResearchInterview1": ["やっぱり自然と絶景が見たいです"],
    "Interview2": ["次は神社にお参りしたいです"],
    "ResearchInterview2": ["街歩きとグルメも気になります"],
    "Introduction1": ["お願いします"],
    "Introduction2": ["お願いします"],
    "Recommendation1": ["おまかせします"],
    "Recommendation2": ["おまかせします"],
    "Closing": ["それでお願いします"],
}

SYSTEM_LINES: dict[str, str] = {
    "ChatContinue": "ようこそ。京都は今日もいい天気ですよ。",
    "ChatDone": "それでは、ご希望を伺いますね。",
    "AskMore": "なるほど。ほかにご希望はありますか？",
    "RequirementsComplete": "かしこまりました。ご希望に合う場所をお探しします。",
    "IntroDelivered": "こちらの3か所が見つかりました。ご覧くださいね。",
    "SpotDiscuss": "こちらは雰囲気がよく、おすすめですよ。",
    "SpotAccepted": "承知しました。こちらに決定ですね。",
    "AllSpotsRejected": "かしこまりました。改めてご希望を伺いますね。",
    "PlanConfirmed": "こちらの2か所でプラン確定です。良いご旅行を！",
}


@dataclass
class Persona:
    name: str = "default"
    chat_turns: int = 1          # ChatContinue turns before ChatDone
    interview_turns: int = 1     # AskMore turns before RequirementsComplete
    discuss_turns: int = 0       # SpotDiscuss turns before deciding
    reject_probability: float = 0.0
    utterances: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "Persona":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown persona fields: {sorted(unknown)}")
        return cls(**data)

    def user_line(self, state: ScenarioState, turn: int) -> str:
        lines = self.utterances.get(state.value) or DEFAULT_UTTERANCES.get(state.value) or ["お願いします"]
        return lines[turn % len(lines)]


class PersonaBackend:
    """System-side double: emits acts per persona policy, seeded RNG."""

    def __init__(self, persona: Persona, rng: random.Random):
        self.persona = persona
        self.rng = rng

    def complete(self, request: BackendRequest) -> str:
        if request.system_prompt.startswith(KEYWORD_INSTRUCTIONS[:16]):
            return ""  # let the lexicon fallback derive keywords
        act = self._act_for(request.state_label, request.turn_index)
        return f"RESPONSE: {SYSTEM_LINES[act]}\nACT: {act}"

    def _act_for(self, state_label: str, turn_index: int) -> str:
        p = self.persona
        if state_label == "Icebreaker":
            return "ChatContinue" if turn_index <= p.chat_turns else "ChatDone"
        if state_label in ("Interview1", "Interview2", "ResearchInterview1", "ResearchInterview2"):
            # keyword calls share the per-state counter, so count in blocks
            per_visit = p.interview_turns + 2
            return "AskMore" if (turn_index - 1) % per_visit < p.interview_turns else "RequirementsComplete"
        if state_label in ("Introduction1", "Introduction2"):
            return "IntroDelivered"
        if state_label in ("Recommendation1", "Recommendation2"):
            if (turn_index - 1) % (p.discuss_turns + 1) < p.discuss_turns:
                return "SpotDiscuss"
            if self.rng.random() < p.reject_probability:
                return "AllSpotsRejected"
            return "SpotAccepted"
        if state_label == "Closing":
            return "PlanConfirmed"
        raise ValueError(f"persona backend asked to speak in state {state_label}")


@dataclass
class SessionSummary:
    session_id: str
    final_state: str
    completed: bool
    first_spot: str | None
    second_spot: str | None
    distance_km: float | None
    feasible: bool | None
    turns: int


def run_personas(
    orchestrator: Orchestrator,
    persona: Persona,
    n_runs: int,
    seed: int = 0,
    threshold_km: float | None = None,
) -> tuple[MetricsReport, list[SessionSummary]]:
    """Run n_runs scripted sessions and compute the plan metric over the store."""
    threshold = orchestrator.config.threshold_km if threshold_km is None else threshold_km
    turn_limit = orchestrator.engine.transition_bound() + 5
    summaries = []
    for _ in range(n_runs):
        session_id = orchestrator.create_session()
        state_turn_counts: dict[str, int] = {}
        for _ in range(turn_limit):
            session = orchestrator.get_session(session_id)
            if session.state is S.End:
                break
            turn = state_turn_counts.get(session.state.value, 0)
            state_turn_counts[session.state.value] = turn + 1
            orchestrator.post_user_turn(session_id, persona.user_line(session.state, turn))
        summaries.append(_summarize(orchestrator, session_id, threshold))
    return compute_metrics(orchestrator.store, threshold), summaries


def _summarize(orchestrator: Orchestrator, session_id: str, threshold_km: float) -> SessionSummary:
    session = orchestrator.get_session(session_id)
    plan = session.plan
    user_turns = sum(1 for t in session.transcript if t.speaker == "user")
    return SessionSummary(
        session_id=session_id,
        final_state=session.state.value,
        completed=session.state is S.End and plan is not None,
        first_spot=plan.first_spot if plan else None,
        second_spot=plan.second_spot if plan else None,
        distance_km=plan.inter_spot_distance if plan else None,
        feasible=(plan.inter_spot_distance <= threshold_km) if plan else None,
        turns=user_turns,
    )
