import pytest
from fastapi.testclient import TestClient

from tourdesk.service import create_app

from .conftest import HAPPY_PATH_TURNS


@pytest.fixture()
def client(make_orchestrator):
    app = create_app(orchestrator=make_orchestrator())
    return TestClient(app)


class TestSessionEndpoints:
    def test_create_session_starts_at_icebreaker(self, client):
        response = client.post("/sessions")
        assert response.status_code == 201
        body = response.json()
        assert body["state"] == "Icebreaker"
        got = client.get(f"/sessions/{body['session_id']}")
        assert got.status_code == 200
        assert got.json()["state"] == "Icebreaker"

    def test_two_sessions_have_distinct_ids(self, client):
        a = client.post("/sessions").json()["session_id"]
        b = client.post("/sessions").json()["session_id"]
        assert a != b

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/zzz").status_code == 404
        assert client.post("/sessions/zzz/turns", json={"text": "x"}).status_code == 404

    def test_full_consultation_over_http(self, client):
        sid = client.post("/sessions").json()["session_id"]
        for text in HAPPY_PATH_TURNS:
            response = client.post(f"/sessions/{sid}/turns", json={"text": text})
            assert response.status_code == 200
            body = response.json()
        assert body["state"] == "End"
        assert body["plan"]["first_spot"] == "kinkakuji"
        assert body["plan"]["second_spot"] == "shimogamo"

        view = client.get(f"/sessions/{sid}").json()
        assert view["state"] == "End"
        assert view["plan"]["feasible"] is True
        assert len(view["transcript"]) == len(HAPPY_PATH_TURNS) * 2

    def test_turn_after_end_409(self, client):
        sid = client.post("/sessions").json()["session_id"]
        for text in HAPPY_PATH_TURNS:
            client.post(f"/sessions/{sid}/turns", json={"text": text})
        response = client.post(f"/sessions/{sid}/turns", json={"text": "延長戦"})
        assert response.status_code == 409

    def test_turn_response_shape(self, client):
        sid = client.post("/sessions").json()["session_id"]
        body = client.post(f"/sessions/{sid}/turns", json={"text": "こんにちは"}).json()
        assert set(body) == {
            "session_id", "system_text", "markup", "spans", "motions",
            "state", "candidates", "plan",
        }
        assert body["markup"].startswith("<speak>")
        assert all({"kind", "at_ms", "duration_ms"} == set(m) for m in body["motions"])


class TestMetricsEndpoint:
    def test_metrics_over_completed_sessions(self, client):
        sid = client.post("/sessions").json()["session_id"]
        for text in HAPPY_PATH_TURNS:
            client.post(f"/sessions/{sid}/turns", json={"text": text})
        client.post("/sessions")  # an abandoned session
        report = client.get("/metrics").json()
        assert report["sessions_total"] == 2
        assert report["sessions_with_plan"] == 1
        assert report["sessions_feasible"] == 1
        assert report["plan_rate"] == 0.5
        assert report["threshold_km"] == 10.0

    def test_threshold_override(self, client):
        sid = client.post("/sessions").json()["session_id"]
        for text in HAPPY_PATH_TURNS:
            client.post(f"/sessions/{sid}/turns", json={"text": text})
        report = client.get("/metrics", params={"threshold_km": 0.5}).json()
        assert report["sessions_feasible"] == 0


class TestAuxiliaryEndpoints:
    def test_transition_table_export(self, client):
        rows = client.get("/transitions").json()
        assert {"from", "act", "to", "guard"} == set(rows[0])
        assert any(r["guard"] for r in rows)

    def test_spot_image_svg(self, client):
        response = client.get("/images/kinkakuji.svg")
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("image/svg+xml")
        assert "金閣寺" in response.text

    def test_unknown_spot_image_404(self, client):
        assert client.get("/images/nowhere.svg").status_code == 404
