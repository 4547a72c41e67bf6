import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conetrade.service import create_app
from conetrade.session import SessionManager


@pytest.fixture
def client(tmp_path):
    app = create_app(SessionManager(data_dir=tmp_path))
    return TestClient(app)


def create(client, **kw):
    body = {
        "human_target": [60, 70, 30],
        "agent_target": [33, 33, 33],
        "algorithm": "stcr",
        "seed": 1,
    }
    body.update(kw)
    res = client.post("/sessions", json=body)
    assert res.status_code == 200, res.text
    return res.json()


class TestSessionEndpoints:
    def test_create_returns_offer(self, client):
        snap = create(client)
        assert "id" in snap
        assert snap["offer"]["token"] == 1
        assert len(snap["offer"]["delta"]) == 3

    def test_invalid_target_rejected(self, client):
        res = client.post("/sessions", json={"human_target": [60, 70, 30], "agent_target": [1, 2, 3]})
        assert res.status_code == 400

    def test_rotation_when_fields_omitted(self, client):
        snap = create(client, agent_target=None, algorithm=None)
        assert snap["agent_target"] == [66, 33, 33]
        assert snap["algorithm"] == "stcr"

    def test_snapshot_matches_responses(self, client):
        snap = create(client)
        sid = snap["id"]
        snap = client.post(
            f"/sessions/{sid}/respond", json={"token": 1, "action": "reject"}
        ).json()
        fetched = client.get(f"/sessions/{sid}").json()
        assert fetched["S_B"] == snap["S_B"]
        assert fetched["history"] == snap["history"]
        assert fetched["offer"]["token"] == snap["offer"]["token"]

    def test_counter_and_accept_flow(self, client):
        snap = create(client)
        sid = snap["id"]
        snap = client.post(
            f"/sessions/{sid}/respond",
            json={"token": 1, "action": "counter", "counter": [0, -10, 5]},
        ).json()
        assert snap["offer"]["delta"] == [0, -10, 5]
        snap = client.post(
            f"/sessions/{sid}/respond",
            json={"token": snap["offer"]["token"], "action": "accept"},
        ).json()
        assert snap["S_B"] == [50, 60, 45]

    def test_stale_token_is_conflict(self, client):
        snap = create(client)
        res = client.post(f"/sessions/{snap['id']}/respond", json={"token": 99, "action": "accept"})
        assert res.status_code == 409

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404
        assert client.post("/sessions/nope/end").status_code == 404

    def test_end_returns_score(self, client):
        snap = create(client)
        out = client.post(f"/sessions/{snap['id']}/end").json()
        assert out["terminal"] and "score" in out

    def test_transcript_is_json_lines(self, client):
        snap = create(client)
        sid = snap["id"]
        client.post(f"/sessions/{sid}/respond", json={"token": 1, "action": "reject"})
        client.post(f"/sessions/{sid}/end")
        text = client.get(f"/sessions/{sid}/transcript").text
        lines = [json.loads(line) for line in text.strip().splitlines()]
        assert lines[0]["type"] == "session"
        assert lines[-1]["type"] == "terminal"
        assert any(l["type"] == "event" for l in lines)

    def test_timestamps_iso8601(self, client):
        from datetime import datetime

        snap = create(client)
        datetime.fromisoformat(snap["created"])
        datetime.fromisoformat(snap["now"])


class TestEndToEndRoundTrip:
    def test_scripted_run_state_consistency(self, client):
        """Create, accept the first offer (via a counter to pin the trade),
        submit one counteroffer, end: displayed allocations track the server
        snapshot exactly and the score matches an L1 recompute."""
        snap = create(client)
        sid = snap["id"]
        # accept the engine's first offer as-is
        snap = client.post(
            f"/sessions/{sid}/respond", json={"token": 1, "action": "accept"}
        ).json()
        after_first = np.asarray(snap["S_B"])
        # one structured counteroffer
        snap = client.post(
            f"/sessions/{sid}/respond",
            json={"token": snap["offer"]["token"], "action": "counter", "counter": [0, -3, 2]},
        ).json()
        out = client.post(f"/sessions/{sid}/end").json()
        fetched = client.get(f"/sessions/{sid}").json()
        assert fetched["S_B"] == out["S_B"]
        assert fetched["score"] == out["score"]
        b = np.asarray([60.0, 70.0, 30.0])
        s0 = np.full(3, 50.0)
        sT = np.asarray(out["S_B"])
        expected = 1.0 - float(np.abs(b - sT).sum()) / float(np.abs(b - s0).sum())
        assert out["score"]["raw"] == pytest.approx(expected, abs=1e-9)
        assert np.all(after_first >= 0)
