import dataclasses
import json
import random

import pytest

from tourdesk.backends import BackendRequest, BackendTransportError, BackendUnavailable, ScriptedBackend
from tourdesk.motion import MotionKind
from tourdesk.orchestrator import (
    SessionEnded,
    SessionNotFound,
    compute_metrics,
    replay_session,
    resolve_accepted_spot,
)
from tourdesk.personas import Persona, PersonaBackend
from tourdesk.scenario import ScenarioState as S

from .conftest import HAPPY_PATH_TURNS, load_demo_table


class TestHappyPath:
    def test_twelve_turns_reach_end_with_plan(self, make_orchestrator):
        orch = make_orchestrator()
        sid = orch.create_session()
        states = []
        for text in HAPPY_PATH_TURNS:
            states.append(orch.post_user_turn(sid, text).state)
        assert states[-1] is S.End
        session = orch.get_session(sid)
        assert session.plan is not None
        assert session.plan.first_spot == "kinkakuji"
        assert session.plan.second_spot == "shimogamo"
        assert session.plan.first_spot != session.plan.second_spot

    def test_state_trajectory(self, make_orchestrator):
        orch = make_orchestrator()
        sid = orch.create_session()
        trajectory = [orch.post_user_turn(sid, t).state for t in HAPPY_PATH_TURNS]
        assert trajectory == [
            S.Icebreaker, S.Interview1, S.Interview1, S.Introduction1,
            S.Recommendation1, S.Recommendation1, S.Interview2, S.Interview2,
            S.Introduction2, S.Recommendation2, S.Closing, S.End,
        ]

    def test_candidates_shown_only_in_display_states(self, make_orchestrator):
        orch = make_orchestrator()
        sid = orch.create_session()
        for text in HAPPY_PATH_TURNS:
            response = orch.post_user_turn(sid, text)
            shows = response.state in (S.Introduction1, S.Introduction2, S.Recommendation1, S.Recommendation2)
            assert bool(response.candidates) == shows
            if shows:
                assert len(response.candidates) == 3
                assert all(c["image_ref"] for c in response.candidates)

    def test_plan_present_only_from_closing(self, make_orchestrator):
        orch = make_orchestrator()
        sid = orch.create_session()
        for text in HAPPY_PATH_TURNS:
            response = orch.post_user_turn(sid, text)
            assert (response.plan is not None) == (response.state in (S.Closing, S.End))

    def test_second_slot_digest_carries_distances(self, make_orchestrator):
        orch = make_orchestrator()
        sid = orch.create_session()
        for text in HAPPY_PATH_TURNS[:9]:
            response = orch.post_user_turn(sid, text)
        assert response.state is S.Introduction2
        assert all(c["distance_km"] is not None for c in response.candidates)

    def test_turn_posted_to_ended_session_rejected(self, make_orchestrator):
        orch = make_orchestrator()
        sid = orch.create_session()
        for text in HAPPY_PATH_TURNS:
            orch.post_user_turn(sid, text)
        with pytest.raises(SessionEnded):
            orch.post_user_turn(sid, "もう一度")

    def test_unknown_session(self, make_orchestrator):
        orch = make_orchestrator()
        with pytest.raises(SessionNotFound):
            orch.post_user_turn("missing", "やあ")

    def test_motions_flow(self, make_orchestrator):
        orch = make_orchestrator()
        sid = orch.create_session()
        kinds = [
            [m.kind for m in orch.post_user_turn(sid, t).motions]
            for t in HAPPY_PATH_TURNS
        ]
        assert all(k[0] is MotionKind.Nod for k in kinds)
        assert MotionKind.LookMonitor in kinds[3]   # first introduction
        assert MotionKind.LookUser in kinds[6]      # images leave after acceptance
        assert MotionKind.Bow in kinds[0]           # greeting opener


class TestResearchLoop:
    def rejection_table(self):
        table = load_demo_table()
        table.update({
            # first visit to Recommendation1 rejects everything
            "Recommendation1/turn1": "RESPONSE: かしこまりました。改めて伺いますね。\nACT: AllSpotsRejected",
            "ResearchInterview1/turn1": "RESPONSE: 自然がお好きなのですね。再検索します。\nACT: RequirementsComplete",
            "ResearchInterview1/turn2": "KEYWORDS: 自然, 絶景",
            "Introduction1/turn2": "RESPONSE: 新しい候補はこちらです。\nACT: IntroDelivered",
            "Recommendation1/turn2": "RESPONSE: 承知しました。こちらに決定ですね。\nACT: SpotAccepted",
        })
        return table

    def test_rejection_clears_then_refreshes_candidates(self, make_orchestrator):
        orch = make_orchestrator(table=self.rejection_table())
        sid = orch.create_session()
        for text in HAPPY_PATH_TURNS[:4]:
            response = orch.post_user_turn(sid, text)
        first_candidates = [c["spot_id"] for c in response.candidates]
        assert response.state is S.Introduction1

        response = orch.post_user_turn(sid, "お願いします")      # -> Recommendation1
        response = orch.post_user_turn(sid, "どれも違います")    # reject -> ResearchInterview1
        assert response.state is S.ResearchInterview1
        assert response.candidates == []
        session = orch.get_session(sid)
        assert session.candidates_1 == []
        assert session.research_loops_1 == 1

        response = orch.post_user_turn(sid, "自然と絶景が見たい")  # -> Introduction1 again
        assert response.state is S.Introduction1
        fresh = [c["spot_id"] for c in response.candidates]
        assert fresh
        assert not set(fresh) & set(first_candidates)  # re-search excludes rejected spots

    def test_keywords_replaced_on_research(self, make_orchestrator):
        orch = make_orchestrator(table=self.rejection_table())
        sid = orch.create_session()
        for text in HAPPY_PATH_TURNS[:5]:
            orch.post_user_turn(sid, text)
        assert orch.get_session(sid).keywords_1 == ["寺", "庭園"]
        orch.post_user_turn(sid, "どれも違います")
        orch.post_user_turn(sid, "自然と絶景が見たい")
        assert orch.get_session(sid).keywords_1 == ["自然", "絶景"]


class TestResolveAcceptedSpot:
    def test_name_mention_wins(self, catalog):
        candidates = [catalog.get(i) for i in ("daigoji", "ginkakuji", "kinkakuji")]
        assert resolve_accepted_spot("では金閣寺にします", candidates).id == "kinkakuji"

    def test_reading_mention_works(self, catalog):
        candidates = [catalog.get(i) for i in ("daigoji", "ginkakuji", "kinkakuji")]
        assert resolve_accepted_spot("きんかくじがいいな", candidates).id == "kinkakuji"

    def test_default_is_best_ranked(self, catalog):
        candidates = [catalog.get(i) for i in ("daigoji", "ginkakuji")]
        assert resolve_accepted_spot("おまかせします", candidates).id == "daigoji"

    def test_longest_mention_wins(self, catalog):
        # 哲学の道 (4 chars) beats 金閣寺 (3 chars) even at a worse rank
        candidates = [catalog.get(i) for i in ("kinkakuji", "tetsugakunomichi")]
        assert resolve_accepted_spot("金閣寺より哲学の道かな", candidates).id == "tetsugakunomichi"

    def test_equal_length_mentions_fall_back_to_rank(self, catalog):
        candidates = [catalog.get(i) for i in ("ginkakuji", "kinkakuji")]
        assert resolve_accepted_spot("銀閣寺より金閣寺", candidates).id == "ginkakuji"


class FailingStore:
    """Raises on append to simulate an unwritable log."""

    def __init__(self, inner):
        self.inner = inner
        self.fail = False

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def append(self, session_id, events):
        if self.fail:
            from tourdesk.store import StorageError

            raise StorageError("disk full")
        return self.inner.append(session_id, events)


class TestAtomicity:
    def test_failed_turn_leaves_session_untouched(self, make_orchestrator):
        orch = make_orchestrator()
        orch.store = FailingStore(orch.store)
        sid = orch.create_session()
        orch.post_user_turn(sid, HAPPY_PATH_TURNS[0])
        before = dataclasses.asdict(orch.get_session(sid))

        orch.store.fail = True
        from tourdesk.store import StorageError

        with pytest.raises(StorageError):
            orch.post_user_turn(sid, HAPPY_PATH_TURNS[1])
        assert dataclasses.asdict(orch.get_session(sid)) == before

        orch.store.fail = False
        response = orch.post_user_turn(sid, HAPPY_PATH_TURNS[1])
        assert response.state is S.Interview1

    def test_backend_outage_commits_nothing(self, make_orchestrator, catalog):
        class DeadBackend:
            def complete(self, request: BackendRequest) -> str:
                raise BackendTransportError("unreachable")

        orch = make_orchestrator(backend=DeadBackend())
        sid = orch.create_session()
        before = dataclasses.asdict(orch.get_session(sid))
        with pytest.raises(BackendUnavailable):
            orch.post_user_turn(sid, "こんにちは")
        assert dataclasses.asdict(orch.get_session(sid)) == before
        assert [e["type"] for e in orch.store.read_events(sid)] == ["created"]


class TestReplay:
    def test_replay_matches_memory_after_each_turn(self, make_orchestrator):
        orch = make_orchestrator()
        sid = orch.create_session()
        for text in HAPPY_PATH_TURNS:
            orch.post_user_turn(sid, text)
            live = orch.get_session(sid)
            rebuilt = replay_session(orch.store.read_events(sid), orch.engine)
            assert dataclasses.asdict(rebuilt) == dataclasses.asdict(live)

    def test_replay_random_persona_sessions(self, make_orchestrator, catalog):
        rng = random.Random(2024)
        persona = Persona(chat_turns=2, interview_turns=2, discuss_turns=1, reject_probability=0.5)
        orch = make_orchestrator(backend=PersonaBackend(persona, rng))
        for _ in range(10):
            sid = orch.create_session()
            state_turns: dict[str, int] = {}
            for _ in range(orch.engine.transition_bound() + 5):
                session = orch.get_session(sid)
                if session.state is S.End:
                    break
                n = state_turns.get(session.state.value, 0)
                state_turns[session.state.value] = n + 1
                orch.post_user_turn(sid, persona.user_line(session.state, n))
            live = orch.get_session(sid)
            rebuilt = replay_session(orch.store.read_events(sid), orch.engine)
            assert dataclasses.asdict(rebuilt) == dataclasses.asdict(live)

    def test_cold_cache_resume_from_disk(self, make_orchestrator):
        orch = make_orchestrator()
        sid = orch.create_session()
        for text in HAPPY_PATH_TURNS[:6]:
            orch.post_user_turn(sid, text)
        live = orch.get_session(sid)

        orch._sessions.clear()  # simulate a process restart
        resumed = orch.get_session(sid)
        assert dataclasses.asdict(resumed) == dataclasses.asdict(live)
        response = orch.post_user_turn(sid, HAPPY_PATH_TURNS[6])
        assert response.state is S.Interview2


class TestMetrics:
    def write_synthetic_session(self, store, sid, state_after, act, distance):
        store.append(sid, [{"type": "created", "session_id": sid, "ts": 0.0}])
        plan = None
        if distance is not None:
            plan = {"first_spot": "a", "second_spot": "b", "inter_spot_distance": distance}
        store.append(sid, [
            {"type": "user_turn", "text": "x", "ts": 1.0},
            {"type": "system_turn", "text": "y", "act": act, "raw_act": act,
             "ts": 2.0, "state_after": state_after, "plan": plan},
        ])

    def test_empty_store(self, make_orchestrator):
        orch = make_orchestrator()
        report = compute_metrics(orch.store, 10.0)
        assert report.sessions_total == 0
        assert report.plan_rate == 0.0

    def test_rate_counts_only_confirmed_feasible_plans(self, make_orchestrator):
        orch = make_orchestrator()
        store = orch.store
        self.write_synthetic_session(store, "s1", "End", "PlanConfirmed", 5.0)
        self.write_synthetic_session(store, "s2", "End", "PlanConfirmed", 25.0)
        self.write_synthetic_session(store, "s3", "Interview1", "AskMore", None)
        report = compute_metrics(store, 10.0)
        assert report.sessions_total == 3
        assert report.sessions_with_plan == 2
        assert report.sessions_feasible == 1
        assert report.plan_rate == pytest.approx(1 / 3)

    def test_all_infeasible_gives_zero(self, make_orchestrator):
        orch = make_orchestrator()
        for i in range(4):
            self.write_synthetic_session(orch.store, f"s{i}", "End", "PlanConfirmed", 30.0 + i)
        report = compute_metrics(orch.store, 10.0)
        assert report.plan_rate == 0.0
