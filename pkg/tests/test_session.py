import json

import numpy as np
import pytest

from conetrade.session import (
    AGENT_TARGET_MENU,
    SessionConfig,
    SessionError,
    SessionManager,
    StaleOfferError,
    alignment_bin,
    score,
)


class FakeClock:
    def __init__(self):
        self.t = 1000.0

    def __call__(self):
        return self.t

    def advance(self, dt):
        self.t += dt


def make_config(**kw):
    defaults = dict(
        human_target=(60.0, 70.0, 30.0),
        agent_target=(33.0, 33.0, 33.0),
        algorithm="stcr",
        seed=1,
    )
    defaults.update(kw)
    return SessionConfig(**defaults)


class TestConfigValidation:
    def test_menu_violation(self):
        with pytest.raises(SessionError):
            make_config(agent_target=(10.0, 10.0, 10.0))

    def test_range_violation(self):
        with pytest.raises(SessionError):
            make_config(human_target=(150.0, 0.0, 0.0))

    def test_unknown_algorithm(self):
        with pytest.raises(SessionError):
            make_config(algorithm="alchemy")

    def test_menu_accepted(self):
        for target in AGENT_TARGET_MENU:
            make_config(agent_target=target)


class TestScore:
    def test_perfect_match(self):
        raw, clamped = score([60, 70, 30], [50, 50, 50], [60, 70, 30])
        assert raw == 1.0 and clamped == 1.0

    def test_no_movement(self):
        raw, clamped = score([60, 70, 30], [50, 50, 50], [50, 50, 50])
        assert raw == 0.0 and clamped == 0.0

    def test_half_improvement(self):
        raw, _ = score([100, 0, 50], [50, 50, 50], [75, 25, 50])
        assert raw == pytest.approx(0.5)

    def test_negative_clamped(self):
        raw, clamped = score([60, 50, 50], [50, 50, 50], [30, 50, 50])
        assert raw == pytest.approx(-2.0)
        assert clamped == 0.0

    def test_degenerate_initial_equals_target(self):
        assert score([50, 50, 50], [50, 50, 50], [50, 50, 50]) == (1.0, 1.0)
        assert score([50, 50, 50], [50, 50, 50], [51, 50, 49]) == (0.0, 0.0)


class TestAlignmentBin:
    def test_same_target_first_bin(self):
        cfg = make_config(human_target=(33.0, 33.0, 33.0))
        assert alignment_bin(cfg) == "0-60"

    def test_opposite_directions_third_bin(self):
        cfg = make_config(agent_target=(33.0, 33.0, 33.0), human_target=(67.0, 67.0, 67.0))
        assert alignment_bin(cfg) == "120-180"

    def test_cross_targets_middle_bin(self):
        cfg = make_config(agent_target=(66.0, 33.0, 33.0), human_target=(33.0, 66.0, 33.0))
        # directions (16,-17,-17) and (-17,16,-17): ~107.8 degrees
        assert alignment_bin(cfg) == "60-120"

    def test_zero_direction_unbinned(self):
        cfg = make_config(human_target=(50.0, 50.0, 50.0))
        assert alignment_bin(cfg) is None


class TestSessionLifecycle:
    def test_create_returns_first_offer(self):
        mgr = SessionManager()
        session, snap = mgr.create_session(make_config())
        assert snap["offer"]["token"] == 1
        assert np.allclose(snap["S_B"], [50, 50, 50])
        assert not snap["terminal"]

    def test_identical_config_identical_first_offers(self):
        mgr = SessionManager()
        _, a = mgr.create_session(make_config(seed=9))
        _, b = mgr.create_session(make_config(seed=9))
        assert a["offer"]["delta"] == b["offer"]["delta"]

    def test_accept_applies_trade(self):
        mgr = SessionManager()
        session, snap = mgr.create_session(make_config())
        token = snap["offer"]["token"]
        # steer the next offer through a beneficial counteroffer, then accept
        snap = mgr.respond(session.id, token, "counter", counter=[0, -10, 5])
        assert snap["history"][-1]["response"] == "counter"
        assert snap["offer"]["delta"] == [0.0, -10.0, 5.0]
        snap = mgr.respond(session.id, snap["offer"]["token"], "accept")
        assert snap["S_B"] == [50.0, 60.0, 45.0]
        assert snap["S_A"] == [50.0, 40.0, 55.0]

    def test_rejection_advances_offer(self):
        mgr = SessionManager()
        session, snap = mgr.create_session(make_config())
        first = snap["offer"]["delta"]
        snap = mgr.respond(session.id, snap["offer"]["token"], "reject")
        assert snap["offer"]["delta"] != first or snap["offer"]["token"] == 2

    def test_stale_token_conflict(self):
        mgr = SessionManager()
        session, snap = mgr.create_session(make_config())
        with pytest.raises(StaleOfferError):
            mgr.respond(session.id, 999, "accept")
        # the pending offer is still answerable afterwards
        mgr.respond(session.id, snap["offer"]["token"], "reject")

    def test_end_session_scores(self):
        mgr = SessionManager()
        session, snap = mgr.create_session(make_config())
        out = mgr.end_session(session.id)
        assert out["terminal"]
        assert out["score"] == {"raw": 0.0, "clamped": 0.0}

    def test_score_recompute_from_transcript(self):
        mgr = SessionManager()
        session, snap = mgr.create_session(make_config())
        snap = mgr.respond(session.id, snap["offer"]["token"], "counter", counter=[0, -10, 5])
        snap = mgr.respond(session.id, snap["offer"]["token"], "accept")
        out = mgr.end_session(session.id)
        lines = [json.loads(line) for line in mgr.transcript_lines(session.id).splitlines()]
        header = lines[0]
        terminal = lines[-1]
        events = [l for l in lines if l["type"] == "event"]
        S_B = np.asarray(events[-1]["S_B"])
        b = np.asarray(header["config"]["human_target"])
        s0 = np.full(3, header["config"]["initial"])
        recomputed = 1.0 - float(np.abs(b - S_B).sum()) / float(np.abs(b - s0).sum())
        assert terminal["score_raw"] == pytest.approx(recomputed, abs=1e-9)
        assert out["score"]["raw"] == pytest.approx(recomputed, abs=1e-9)


class TestTimeouts:
    def test_late_response_becomes_timeout_reject(self):
        clock = FakeClock()
        mgr = SessionManager(clock=clock)
        session, snap = mgr.create_session(make_config())
        token = snap["offer"]["token"]
        clock.advance(121.0)
        snap = mgr.respond(session.id, token, "accept")  # too late: discarded
        assert snap["history"][-1]["response"] == "reject"
        assert "timeout" in snap["history"][-1]["tags"]
        assert snap["S_B"] == [50.0, 50.0, 50.0]
        assert snap["offer"]["token"] == token + 1

    def test_time_limit_finalizes(self):
        clock = FakeClock()
        mgr = SessionManager(clock=clock)
        session, snap = mgr.create_session(make_config(time_limit=600.0))
        clock.advance(601.0)
        out = mgr.respond(session.id, snap["offer"]["token"], "reject")
        assert out["terminal"]
        assert out["terminal_reason"] == "external_stop"


class TestRotation:
    def test_round_robin_over_menu_and_algorithms(self):
        mgr = SessionManager()
        seen = [mgr.rotate_assignment() for _ in range(15)]
        targets = [t for t, _ in seen]
        assert targets[:5] == list(AGENT_TARGET_MENU)
        algos = [a for _, a in seen]
        assert algos[0:5] == ["stcr"] * 5
        assert algos[5:10] == ["gca"] * 5
        assert algos[10:15] == ["random-prev"] * 5


class TestPersistence:
    def test_recovery_restores_state(self, tmp_path):
        mgr = SessionManager(data_dir=tmp_path)
        session, snap = mgr.create_session(make_config())
        snap = mgr.respond(session.id, snap["offer"]["token"], "reject")
        snap = mgr.respond(session.id, snap["offer"]["token"], "counter", counter=[0, -10, 5])
        snap = mgr.respond(session.id, snap["offer"]["token"], "accept")
        expected_S_B = snap["S_B"]

        revived = SessionManager(data_dir=tmp_path)
        assert session.id in revived.sessions
        snap2 = revived.snapshot(session.id)
        assert snap2["S_B"] == expected_S_B
        assert not snap2["terminal"]
        assert len(snap2["history"]) == len(snap["history"])

    def test_terminal_sessions_not_revived(self, tmp_path):
        mgr = SessionManager(data_dir=tmp_path)
        session, _ = mgr.create_session(make_config())
        mgr.end_session(session.id)
        revived = SessionManager(data_dir=tmp_path)
        assert session.id not in revived.sessions
