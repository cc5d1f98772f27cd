"""Full-turn orchestration over one session store.

A user turn runs: generate (joint response + act) -> on RequirementsComplete
extract keywords and search -> on SpotAccepted record the choice -> state
transition -> emphasis markup -> motion commands -> atomic persist.

All session mutation goes through ``apply_event``, for the live path and for
crash replay alike, so a session rebuilt from its event log is identical to
the in-memory one by construction. A turn mutates a working copy and swaps it
in only after its event group is durably appended; any error leaves both the
log and the cached session exactly as they were before the turn.
"""

from __future__ import annotations

import copy
import threading
import time
import uuid
from dataclasses import dataclass

from . import speech
from .backends import GenerationBackend
from .catalog import Catalog, SearchQuery, Spot, distance as spot_distance, normalize
from .config import Config
from .generation import (
    GenreList,
    SpotDigest,
    build_prompt,
    build_spot_digest,
    extract_keywords,
    generate,
    load_genre_list,
    load_keyword_lexicon,
)
from .motion import (
    DialogueEvent,
    EventKind,
    MotionCommand,
    MotionProfile,
    direct,
    load_greeting_lexicon,
    load_motion_profile,
)
from .scenario import (
    INTERVIEW_STATES,
    SPOT_DISPLAY_STATES,
    DialogueAct,
    ScenarioEngine,
    ScenarioState,
    SessionRecord,
    TourPlan,
)
from .store import SessionStore, StorageError


class SessionNotFound(Exception):
    pass


class SessionEnded(Exception):
    pass


@dataclass
class TurnResponse:
    session_id: str
    system_text: str
    markup: str                       # rendered SSML-style document
    spans: list[dict]                 # structured emphasis spans for UIs
    motions: list[MotionCommand]
    state: ScenarioState
    candidates: list[dict]            # digests with image refs; spot-display states only
    plan: TourPlan | None
    plan_view: dict | None = None     # plan payload with display names and feasibility

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "system_text": self.system_text,
            "markup": self.markup,
            "spans": self.spans,
            "motions": [
                {"kind": m.kind.value, "at_ms": m.at_ms, "duration_ms": m.duration_ms}
                for m in self.motions
            ],
            "state": self.state.value,
            "candidates": self.candidates,
            "plan": self.plan_view if self.plan_view is not None else plan_to_dict(self.plan),
        }


@dataclass
class MetricsReport:
    sessions_total: int
    sessions_with_plan: int
    sessions_feasible: int
    plan_rate: float
    threshold_km: float

    def to_dict(self) -> dict:
        return {
            "sessions_total": self.sessions_total,
            "sessions_with_plan": self.sessions_with_plan,
            "sessions_feasible": self.sessions_feasible,
            "plan_rate": self.plan_rate,
            "threshold_km": self.threshold_km,
        }


def plan_to_dict(plan: TourPlan | None) -> dict | None:
    if plan is None:
        return None
    return {
        "first_spot": plan.first_spot,
        "second_spot": plan.second_spot,
        "inter_spot_distance": plan.inter_spot_distance,
    }


def apply_event(session: SessionRecord, event: dict, engine: ScenarioEngine) -> None:
    """Fold one persisted event into a session record."""
    etype = event["type"]
    if etype == "created":
        return
    if etype == "user_turn":
        engine.begin_user_turn(session)
        session.append_turn("user", event["text"], event["ts"])
        if session.state in INTERVIEW_STATES:
            texts = (
                session.interview_texts_1
                if session.slot_for(session.state) == "first"
                else session.interview_texts_2
            )
            texts.append(event["text"])
    elif etype == "keywords":
        if event["slot"] == "first":
            session.keywords_1 = list(event["keywords"])
        else:
            session.keywords_2 = list(event["keywords"])
        key = session.state.value
        session.backend_calls[key] = session.backend_calls.get(key, 0) + 1
    elif etype == "candidates":
        if event["slot"] == "first":
            session.candidates_1 = list(event["spot_ids"])
        else:
            session.candidates_2 = list(event["spot_ids"])
    elif etype == "choice":
        engine.record_choice(session, engine.catalog.get(event["spot_id"]), event["slot"])
    elif etype == "system_turn":
        key = session.state.value
        session.backend_calls[key] = session.backend_calls.get(key, 0) + 1
        engine.transition(session.state, DialogueAct(event["act"]), session)
        session.append_turn("system", event["text"], event["ts"])
    # unknown event types are skipped for forward compatibility


def replay_session(events: list[dict], engine: ScenarioEngine) -> SessionRecord:
    """Rebuild a session record from its committed event log."""
    if not events or events[0]["type"] != "created":
        raise StorageError("event log does not begin with a created event")
    session = engine.new_session(events[0]["session_id"])
    for event in events[1:]:
        apply_event(session, event, engine)
    return session


def resolve_accepted_spot(user_text: str, candidates: list[Spot]) -> Spot:
    """Pick which candidate the user accepted, by name or reading mention.

    The act label carries no spot, so the accepted spot is resolved from the
    user's own words: the longest candidate name (or reading) occurring in the
    utterance wins, and the best-ranked candidate is the default.
    """
    if not candidates:
        raise ValueError("cannot resolve a choice without candidates")
    text = normalize(user_text)
    best: tuple[tuple[int, int], Spot] | None = None
    for rank, spot in enumerate(candidates):
        for surface in (spot.name, spot.reading.replace("｜", "")):
            needle = normalize(surface)
            if needle and needle in text:
                key = (-len(needle), rank)
                if best is None or key < best[0]:
                    best = (key, spot)
    return best[1] if best else candidates[0]


class Orchestrator:
    """Serialized per-session turn pipeline over a store, catalog and backend."""

    def __init__(
        self,
        catalog: Catalog,
        store: SessionStore,
        backend: GenerationBackend,
        config: Config | None = None,
        genre_list: GenreList | None = None,
        keyword_lexicon: dict[str, str] | None = None,
        person_lexicon: list[str] | None = None,
        greeting_lexicon: list[str] | None = None,
        emphasis_profile: speech.EmphasisProfile | None = None,
        motion_profile: MotionProfile | None = None,
    ):
        self.catalog = catalog
        self.store = store
        self.backend = backend
        self.config = config or Config()
        self.engine = ScenarioEngine(catalog, self.config)
        self.genre_list = genre_list or load_genre_list()
        self.keyword_lexicon = keyword_lexicon if keyword_lexicon is not None else load_keyword_lexicon()
        self.person_lexicon = person_lexicon if person_lexicon is not None else speech.load_person_lexicon()
        self.greeting_lexicon = greeting_lexicon if greeting_lexicon is not None else load_greeting_lexicon()
        self.emphasis_profile = emphasis_profile or speech.default_profile()
        self.motion_profile = motion_profile or load_motion_profile()

        self._sessions: dict[str, SessionRecord] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    @classmethod
    def from_config(cls, config: Config, backend: GenerationBackend | None = None) -> "Orchestrator":
        from .backends import RemoteBackend, ScriptedBackend
        from .catalog import load_catalog

        if backend is None:
            if config.backend == "remote":
                backend = RemoteBackend(
                    endpoint=config.backend_endpoint,
                    api_key=config.backend_key,
                    timeout_s=config.backend_timeout_s,
                )
            else:
                backend = ScriptedBackend.from_file(config.script_file)
        return cls(
            catalog=load_catalog(config.catalog_file),
            store=SessionStore(config.storage_dir),
            backend=backend,
            config=config,
        )

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    # -- session lifecycle --------------------------------------------------

    def create_session(self) -> str:
        session_id = uuid.uuid4().hex[:12]
        session = self.engine.new_session(session_id)
        self.store.append(
            session_id, [{"type": "created", "session_id": session_id, "ts": time.time()}]
        )
        with self._registry_lock:
            self._sessions[session_id] = session
            self._locks.setdefault(session_id, threading.Lock())
        return session_id

    def get_session(self, session_id: str) -> SessionRecord:
        with self._registry_lock:
            cached = self._sessions.get(session_id)
        if cached is not None:
            return cached
        try:
            events = self.store.read_events(session_id)
        except StorageError as exc:
            raise SessionNotFound(session_id) from exc
        session = replay_session(events, self.engine)
        with self._registry_lock:
            self._sessions.setdefault(session_id, session)
        return session

    # -- the turn pipeline ---------------------------------------------------

    def post_user_turn(self, session_id: str, text: str) -> TurnResponse:
        with self._lock_for(session_id):
            session = self.get_session(session_id)
            if session.state is ScenarioState.End:
                raise SessionEnded(session_id)

            work = copy.deepcopy(session)
            pre_state = work.state
            events: list[dict] = []

            def emit(event: dict) -> None:
                apply_event(work, event, self.engine)
                events.append(event)

            emit({"type": "user_turn", "text": text, "ts": time.time()})

            bundle = build_prompt(
                pre_state, work, self._catalog_view(work), self.config.context_window_turns
            )
            response_index = work.backend_calls.get(pre_state.value, 0) + 1
            output = generate(
                bundle, self.backend,
                turn_index=response_index,
                retries=self.config.backend_retries,
            )
            act = self.engine.coerce_act(pre_state, output.act, work)

            if act is DialogueAct.RequirementsComplete:
                slot = work.slot_for(pre_state)
                keywords = extract_keywords(
                    work, slot, self.backend,
                    turn_index=response_index + 1,
                    lexicon=self.keyword_lexicon,
                    retries=self.config.backend_retries,
                )
                emit({"type": "keywords", "slot": slot, "keywords": keywords})
                emit({"type": "candidates", "slot": slot, "spot_ids": self._search_candidates(work, slot)})
            elif act is DialogueAct.SpotAccepted:
                candidates = [self.catalog.get(i) for i in work.candidates_for(pre_state)]
                spot = resolve_accepted_spot(text, candidates)
                emit({"type": "choice", "slot": work.slot_for(pre_state), "spot_id": spot.id})

            system_event = {
                "type": "system_turn",
                "text": output.response_text,
                "act": act.value,
                "raw_act": output.act.value,
                "ts": time.time(),
            }
            emit(system_event)
            # informational annotations; replay derives these itself
            system_event["state_after"] = work.state.value
            system_event["plan"] = plan_to_dict(work.plan)

            self.store.append(session_id, events)
            with self._registry_lock:
                self._sessions[session_id] = work
            return self._build_response(work, pre_state, output.response_text)

    def _catalog_view(self, session: SessionRecord) -> GenreList | SpotDigest | None:
        state = session.state
        if state in INTERVIEW_STATES:
            return self.genre_list
        if state in SPOT_DISPLAY_STATES:
            spots = [self.catalog.get(i) for i in session.candidates_for(state)]
            distances = None
            if session.slot_for(state) == "second" and session.first_choice:
                first = self.catalog.get(session.first_choice)
                distances = {s.id: spot_distance(first, s) for s in spots}
            return build_spot_digest(spots, distances)
        return None

    def _search_candidates(self, session: SessionRecord, slot: str) -> list[str]:
        if slot == "first":
            keywords, rejected = session.keywords_1, session.rejected_ids_1
        else:
            keywords, rejected = session.keywords_2, session.rejected_ids_2
        exclude = set(rejected)
        if slot == "second" and session.first_choice:
            exclude.add(session.first_choice)
        spots = self.catalog.search(SearchQuery(keywords=list(keywords), exclude_ids=exclude))
        if not spots:
            # no keyword matched anything: fall back to the first non-excluded
            # spots so the introduction always has something to show
            spots = [s for s in self.catalog.spots() if s.id not in exclude][:3]
        return [s.id for s in spots]

    def _build_response(
        self, session: SessionRecord, pre_state: ScenarioState, system_text: str
    ) -> TurnResponse:
        markup = speech.annotate(
            system_text, self.catalog.spots(), self.person_lexicon, self.emphasis_profile
        )
        rendered = speech.render(markup, self.emphasis_profile)
        motions = self._motions(pre_state, session.state, system_text)
        show_plan = session.state in (ScenarioState.Closing, ScenarioState.End)
        return TurnResponse(
            session_id=session.session_id,
            system_text=system_text,
            markup=rendered,
            spans=[_span_to_dict(s) for s in markup.spans],
            motions=motions,
            state=session.state,
            candidates=self._candidate_payload(session),
            plan=session.plan if show_plan else None,
            plan_view=self._plan_view(session.plan) if show_plan else None,
        )

    def _plan_view(self, plan: TourPlan | None) -> dict | None:
        payload = plan_to_dict(plan)
        if payload is None:
            return None
        payload["first_spot_name"] = self.catalog.get(plan.first_spot).name
        payload["second_spot_name"] = self.catalog.get(plan.second_spot).name
        payload["feasible"] = plan.inter_spot_distance <= self.config.threshold_km
        return payload

    def _motions(
        self, pre_state: ScenarioState, post_state: ScenarioState, system_text: str
    ) -> list[MotionCommand]:
        dialogue_events = [
            DialogueEvent(EventKind.UserSpeechStarted),
            DialogueEvent(EventKind.SystemUtteranceReady, payload=system_text),
        ]
        showing_before = pre_state in SPOT_DISPLAY_STATES
        showing_after = post_state in SPOT_DISPLAY_STATES
        if showing_after and not showing_before:
            dialogue_events.append(DialogueEvent(EventKind.ImagesDisplayed))
        elif showing_before and not showing_after:
            dialogue_events.append(DialogueEvent(EventKind.ImagesHidden))
        commands: list[MotionCommand] = []
        for event in dialogue_events:
            commands.extend(direct(event, post_state, self.greeting_lexicon, self.motion_profile))
        return commands

    def _candidate_payload(self, session: SessionRecord) -> list[dict]:
        if session.state not in SPOT_DISPLAY_STATES:
            return []
        view = self._catalog_view(session)
        assert isinstance(view, SpotDigest)
        payload = []
        for row in view.rows:
            spot = self.catalog.get(row.spot_id)
            payload.append({
                "spot_id": row.spot_id,
                "name": row.name,
                "reading": row.reading,
                "reason": row.reason,
                "genres": list(row.genres),
                "distance_km": row.distance_km,
                "image_ref": spot.image_ref,
            })
        return payload

    # -- views and metrics ----------------------------------------------------

    def session_view(self, session_id: str) -> dict:
        session = self.get_session(session_id)
        transcript = []
        for turn in session.transcript:
            entry: dict = {"speaker": turn.speaker, "text": turn.text, "timestamp": turn.timestamp}
            if turn.speaker == "system":
                markup = speech.annotate(
                    turn.text, self.catalog.spots(), self.person_lexicon, self.emphasis_profile
                )
                entry["spans"] = [_span_to_dict(s) for s in markup.spans]
            transcript.append(entry)
        return {
            "session_id": session.session_id,
            "state": session.state.value,
            "transcript": transcript,
            "keywords_1": list(session.keywords_1),
            "keywords_2": list(session.keywords_2),
            "candidates": self._candidate_payload(session),
            "plan": self._plan_view(session.plan),
            "research_loops_1": session.research_loops_1,
            "research_loops_2": session.research_loops_2,
            "threshold_km": self.config.threshold_km,
        }


def _span_to_dict(span: speech.EmphasisSpan) -> dict:
    return {
        "start": span.start,
        "end": span.end,
        "level": span.level,
        "category": span.category,
        "phonetic": span.phonetic,
    }


def compute_metrics(store: SessionStore, threshold_km: float) -> MetricsReport:
    """Plan-completion metrics over every session in the store.

    A session counts as planned only when it reached End through PlanConfirmed
    with a plan recorded; feasibility is the distance-threshold proxy.
    """
    total = 0
    with_plan = 0
    feasible = 0
    for session_id in store.list_sessions():
        events = store.read_events(session_id)
        if not events:
            continue
        total += 1
        final = None
        for event in events:
            if event.get("type") == "system_turn":
                final = event
        if final is None:
            continue
        plan = final.get("plan")
        if final.get("state_after") == "End" and final.get("act") == "PlanConfirmed" and plan:
            with_plan += 1
            if plan["inter_spot_distance"] <= threshold_km:
                feasible += 1
    rate = feasible / total if total else 0.0
    return MetricsReport(
        sessions_total=total,
        sessions_with_plan=with_plan,
        sessions_feasible=feasible,
        plan_rate=rate,
        threshold_km=threshold_km,
    )
