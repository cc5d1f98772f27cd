"""Finite-state scenario control for the two-spot travel consultation.

The consultation runs a fixed graph: icebreaker chat, an interview about the
user's wishes, introduction and recommendation of three searched spots, an
optional re-search interview when all three are rejected, the same chain again
for the second spot, then a closing confirmation. States advance only in
response to dialogue acts; every self-loop is bounded by a turn cap and the
re-search loop is bounded by ``loop_cap``, so a session always terminates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

from .catalog import Catalog, Spot, distance as spot_distance
from .config import Config


class ScenarioState(str, Enum):
    Icebreaker = "Icebreaker"
    Interview1 = "Interview1"
    Introduction1 = "Introduction1"
    Recommendation1 = "Recommendation1"
    ResearchInterview1 = "ResearchInterview1"
    Interview2 = "Interview2"
    Introduction2 = "Introduction2"
    Recommendation2 = "Recommendation2"
    ResearchInterview2 = "ResearchInterview2"
    Closing = "Closing"
    End = "End"


class DialogueAct(str, Enum):
    ChatContinue = "ChatContinue"
    ChatDone = "ChatDone"
    AskMore = "AskMore"
    RequirementsComplete = "RequirementsComplete"
    IntroDelivered = "IntroDelivered"
    SpotAccepted = "SpotAccepted"
    SpotDiscuss = "SpotDiscuss"
    AllSpotsRejected = "AllSpotsRejected"
    PlanConfirmed = "PlanConfirmed"
    Farewell = "Farewell"


S = ScenarioState
A = DialogueAct

INTERVIEW_STATES = frozenset({S.Interview1, S.ResearchInterview1, S.Interview2, S.ResearchInterview2})
RECOMMENDATION_STATES = frozenset({S.Recommendation1, S.Recommendation2})
INTRODUCTION_STATES = frozenset({S.Introduction1, S.Introduction2})
SPOT_DISPLAY_STATES = INTRODUCTION_STATES | RECOMMENDATION_STATES

FIRST_SLOT_STATES = frozenset({S.Interview1, S.Introduction1, S.Recommendation1, S.ResearchInterview1})

# Unguarded arrows of the scenario graph.
SIMPLE_TRANSITIONS: dict[tuple[ScenarioState, DialogueAct], ScenarioState] = {
    (S.Icebreaker, A.ChatContinue): S.Icebreaker,
    (S.Icebreaker, A.ChatDone): S.Interview1,
    (S.Interview1, A.AskMore): S.Interview1,
    (S.Interview1, A.RequirementsComplete): S.Introduction1,
    (S.Introduction1, A.IntroDelivered): S.Recommendation1,
    (S.Recommendation1, A.SpotDiscuss): S.Recommendation1,
    (S.Recommendation1, A.SpotAccepted): S.Interview2,
    (S.ResearchInterview1, A.AskMore): S.ResearchInterview1,
    (S.ResearchInterview1, A.RequirementsComplete): S.Introduction1,
    (S.Interview2, A.AskMore): S.Interview2,
    (S.Interview2, A.RequirementsComplete): S.Introduction2,
    (S.Introduction2, A.IntroDelivered): S.Recommendation2,
    (S.Recommendation2, A.SpotDiscuss): S.Recommendation2,
    (S.Recommendation2, A.SpotAccepted): S.Closing,
    (S.ResearchInterview2, A.AskMore): S.ResearchInterview2,
    (S.ResearchInterview2, A.RequirementsComplete): S.Introduction2,
    (S.Closing, A.PlanConfirmed): S.End,
    (S.Closing, A.Farewell): S.End,
}

# Rejection of all three candidates is guarded by the re-search loop counter.
GUARDED_ACTS = {
    S.Recommendation1: A.AllSpotsRejected,
    S.Recommendation2: A.AllSpotsRejected,
}

SELF_LOOP_ACTS = frozenset({A.ChatContinue, A.AskMore, A.SpotDiscuss})


class ScenarioError(Exception):
    pass


class InvalidAct(ScenarioError):
    """The act is not permitted in the current state."""


class InvariantViolation(ScenarioError):
    pass


class DuplicateSpot(ScenarioError):
    pass


class NotACandidate(ScenarioError):
    pass


@dataclass
class Turn:
    speaker: str  # "user" | "system"
    text: str
    timestamp: float

    def as_tuple(self) -> tuple[str, str, float]:
        return (self.speaker, self.text, self.timestamp)


@dataclass
class TourPlan:
    first_spot: str   # spot id
    second_spot: str  # spot id
    inter_spot_distance: float  # km


@dataclass
class SessionRecord:
    session_id: str
    state: ScenarioState = S.Icebreaker
    transcript: list[Turn] = field(default_factory=list)
    keywords_1: list[str] = field(default_factory=list)
    keywords_2: list[str] = field(default_factory=list)
    candidates_1: list[str] = field(default_factory=list)  # spot ids, ranked
    candidates_2: list[str] = field(default_factory=list)
    plan: TourPlan | None = None
    research_loops_1: int = 0
    research_loops_2: int = 0
    interview_turns: int = 0  # user turns spent in the current state

    # bookkeeping beyond the core record
    first_choice: str | None = None
    second_choice: str | None = None
    rejected_ids_1: list[str] = field(default_factory=list)
    rejected_ids_2: list[str] = field(default_factory=list)
    interview_texts_1: list[str] = field(default_factory=list)
    interview_texts_2: list[str] = field(default_factory=list)
    backend_calls: dict[str, int] = field(default_factory=dict)

    def append_turn(self, speaker: str, text: str, timestamp: float | None = None) -> Turn:
        turn = Turn(speaker, text, time.time() if timestamp is None else timestamp)
        self.transcript.append(turn)
        return turn

    def candidates_for(self, state: ScenarioState) -> list[str]:
        return self.candidates_1 if state in FIRST_SLOT_STATES else self.candidates_2

    def slot_for(self, state: ScenarioState) -> str:
        return "first" if state in FIRST_SLOT_STATES else "second"


def initial_state() -> ScenarioState:
    return S.Icebreaker


def accepted_acts(state: ScenarioState) -> frozenset[DialogueAct]:
    acts = {act for (s, act) in SIMPLE_TRANSITIONS if s is state}
    guarded = GUARDED_ACTS.get(state)
    if guarded is not None:
        acts.add(guarded)
    return frozenset(acts)


def transition_table() -> list[dict]:
    """Machine-readable transition table: list of {from, act, to, guard}."""
    rows = [
        {"from": s.value, "act": a.value, "to": to.value, "guard": None}
        for (s, a), to in SIMPLE_TRANSITIONS.items()
    ]
    for state, act in GUARDED_ACTS.items():
        slot = "1" if state is S.Recommendation1 else "2"
        research = S.ResearchInterview1 if slot == "1" else S.ResearchInterview2
        fallback_to = S.Interview2 if slot == "1" else S.Closing
        rows.append({
            "from": state.value, "act": act.value, "to": research.value,
            "guard": f"research_loops_{slot} < loop_cap",
        })
        rows.append({
            "from": state.value, "act": act.value, "to": fallback_to.value,
            "guard": f"research_loops_{slot} >= loop_cap (forced accept of best-ranked candidate)",
        })
    rows.sort(key=lambda r: (r["from"], r["act"], r["to"]))
    return rows


class ScenarioEngine:
    """Owns state transitions and plan construction for session records."""

    def __init__(self, catalog: Catalog, config: Config | None = None):
        self.catalog = catalog
        self.config = config or Config()

    def new_session(self, session_id: str) -> SessionRecord:
        return SessionRecord(session_id=session_id, state=initial_state())

    def begin_user_turn(self, session: SessionRecord) -> None:
        session.interview_turns += 1

    def self_loop_cap(self, state: ScenarioState) -> int | None:
        if state is S.Icebreaker:
            return self.config.icebreaker_turn_cap
        if state in INTERVIEW_STATES:
            return self.config.interview_turn_cap
        if state in RECOMMENDATION_STATES:
            return self.config.discuss_turn_cap
        return None

    def coerce_act(self, state: ScenarioState, act: DialogueAct, session: SessionRecord) -> DialogueAct:
        """Force progress out of a self-loop once the state's turn cap is spent."""
        if act not in SELF_LOOP_ACTS:
            return act
        cap = self.self_loop_cap(state)
        if cap is None or session.interview_turns <= cap:
            return act
        if state is S.Icebreaker:
            return A.ChatDone
        if state in INTERVIEW_STATES:
            return A.RequirementsComplete
        return A.SpotAccepted

    def transition(self, state: ScenarioState, act: DialogueAct, session: SessionRecord) -> ScenarioState:
        if act not in accepted_acts(state):
            raise InvalidAct(f"act {act.value} not permitted in state {state.value}")

        if act is A.AllSpotsRejected:
            next_state = self._handle_rejection(state, session)
        else:
            if act is A.SpotAccepted and not session.candidates_for(state):
                raise InvariantViolation(f"SpotAccepted in {state.value} with no candidates")
            next_state = SIMPLE_TRANSITIONS[(state, act)]

        if next_state is not state:
            session.interview_turns = 0
        session.state = next_state
        return next_state

    def _handle_rejection(self, state: ScenarioState, session: SessionRecord) -> ScenarioState:
        candidates = session.candidates_for(state)
        if not candidates:
            raise InvariantViolation(f"AllSpotsRejected in {state.value} with no candidates")
        first_slot = state is S.Recommendation1
        loops = session.research_loops_1 if first_slot else session.research_loops_2
        if loops < self.config.loop_cap:
            if first_slot:
                session.research_loops_1 += 1
                session.rejected_ids_1.extend(candidates)
                session.candidates_1 = []
                return S.ResearchInterview1
            session.research_loops_2 += 1
            session.rejected_ids_2.extend(candidates)
            session.candidates_2 = []
            return S.ResearchInterview2
        # Loop cap spent: accept the best-ranked candidate so the session ends.
        spot = self._forced_choice(session, candidates, first_slot)
        self.record_choice(session, spot, "first" if first_slot else "second")
        return S.Interview2 if first_slot else S.Closing

    def _forced_choice(self, session: SessionRecord, candidates: list[str], first_slot: bool) -> Spot:
        for spot_id in candidates:
            if first_slot or spot_id != session.first_choice:
                return self.catalog.get(spot_id)
        raise InvariantViolation("no candidate distinct from the first chosen spot")

    def record_choice(self, session: SessionRecord, spot: Spot, slot: str) -> SessionRecord:
        if slot not in ("first", "second"):
            raise ValueError(f"slot must be 'first' or 'second', got {slot!r}")
        candidates = session.candidates_1 if slot == "first" else session.candidates_2
        if spot.id not in candidates:
            raise NotACandidate(f"{spot.id} is not among the current candidates {candidates}")
        if slot == "first":
            session.first_choice = spot.id
            return session
        if spot.id == session.first_choice:
            raise DuplicateSpot(f"{spot.id} already chosen as the first spot")
        session.second_choice = spot.id
        first = self.catalog.get(session.first_choice)
        session.plan = TourPlan(
            first_spot=first.id,
            second_spot=spot.id,
            inter_spot_distance=spot_distance(first, spot),
        )
        return session

    def transition_bound(self) -> int:
        """Worst-case transitions for any valid capped session (termination bound)."""
        cfg = self.config
        icebreaker = cfg.icebreaker_turn_cap + 1
        cycle = (cfg.interview_turn_cap + 1) + 1 + (cfg.discuss_turn_cap + 1)
        per_slot = (cfg.loop_cap + 1) * cycle
        closing = 1
        return icebreaker + 2 * per_slot + closing
