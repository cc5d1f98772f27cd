import json

import pytest

from tourdesk.motion import (
    DialogueEvent,
    EventKind,
    MotionCommand,
    MotionKind,
    direct,
    load_greeting_lexicon,
    load_motion_profile,
)
from tourdesk.scenario import ScenarioState as S

GREETINGS = load_greeting_lexicon()


class TestDirect:
    def test_user_speech_nods_in_any_state(self):
        for state in S:
            commands = direct(DialogueEvent(EventKind.UserSpeechStarted), state, GREETINGS)
            assert [c.kind for c in commands] == [MotionKind.Nod]

    def test_greeting_bows(self):
        event = DialogueEvent(EventKind.SystemUtteranceReady, payload="こんにちは、ようこそ京都へ。")
        commands = direct(event, S.Icebreaker, GREETINGS)
        assert [c.kind for c in commands] == [MotionKind.Bow]

    def test_greeting_match_is_prefix_only(self):
        event = DialogueEvent(EventKind.SystemUtteranceReady, payload="そろそろこんにちはと言いましょう")
        assert direct(event, S.Icebreaker, GREETINGS) == []

    def test_images_displayed_looks_at_monitor(self):
        commands = direct(DialogueEvent(EventKind.ImagesDisplayed), S.Introduction1, GREETINGS)
        assert [c.kind for c in commands] == [MotionKind.LookMonitor]

    def test_images_hidden_restores_gaze(self):
        commands = direct(DialogueEvent(EventKind.ImagesHidden), S.Interview2, GREETINGS)
        assert [c.kind for c in commands] == [MotionKind.LookUser]

    def test_non_greeting_utterance_is_silent(self):
        event = DialogueEvent(EventKind.SystemUtteranceReady, payload="それでは候補をご紹介します。")
        assert direct(event, S.Introduction1, GREETINGS) == []

    def test_totality_and_command_budget(self):
        events = [
            DialogueEvent(EventKind.UserSpeechStarted),
            DialogueEvent(EventKind.SystemUtteranceReady, payload=""),
            DialogueEvent(EventKind.SystemUtteranceReady, payload="ようこそ"),
            DialogueEvent(EventKind.ImagesDisplayed),
            DialogueEvent(EventKind.ImagesHidden),
        ]
        for event in events:
            for state in S:
                commands = direct(event, state, GREETINGS)
                assert len(commands) <= 2
                for c in commands:
                    assert c.duration_ms > 0

    def test_replay_stability(self):
        event = DialogueEvent(EventKind.SystemUtteranceReady, payload="おはようございます")
        first = direct(event, S.Icebreaker, GREETINGS)
        assert all(direct(event, S.Icebreaker, GREETINGS) == first for _ in range(10))

    def test_durations_come_from_profile(self):
        profile = load_motion_profile()
        nod = direct(DialogueEvent(EventKind.UserSpeechStarted), S.Icebreaker, GREETINGS, profile)
        assert nod[0].duration_ms == profile.nod_ms == 600
        bow = direct(
            DialogueEvent(EventKind.SystemUtteranceReady, payload="ようこそ"),
            S.Icebreaker, GREETINGS, profile,
        )
        assert bow[0].duration_ms == profile.bow_ms == 1500


class TestTypes:
    def test_payload_required_exactly_for_utterances(self):
        with pytest.raises(ValueError):
            DialogueEvent(EventKind.UserSpeechStarted, payload="x")
        with pytest.raises(ValueError):
            DialogueEvent(EventKind.SystemUtteranceReady)

    def test_command_json_lines_shape(self):
        command = MotionCommand(MotionKind.Bow, 0, 1500)
        assert json.loads(command.to_json()) == {"kind": "Bow", "at_ms": 0, "duration_ms": 1500}
