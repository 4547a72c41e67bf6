"""Live negotiation sessions for a human responding agent.

A session wraps one offer engine: the computer proposes integer trades, the
human accepts, rejects, or counters through tokened responses. Allocations
start at 50 per category; the computer's target comes from a fixed menu and
its utility is the concave quadratic maximized at that target. The human's
target is recorded for scoring only and never feeds the algorithm.
"""

from __future__ import annotations

import json
import math
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .baselines import GreedyConcessionEngine, RandomTradingEngine
from .discrete import DiscreteConeEngine
from .engine import ACCEPT, REJECT, CounterOffer, EXTERNAL_STOP, NegotiationParams, TradingEngine
from .geometry import angle_between, as_vector
from .trading import QuadraticUtility, TradingError, benefit

AGENT_TARGET_MENU = (
    (66.0, 33.0, 33.0),
    (33.0, 66.0, 33.0),
    (33.0, 33.0, 66.0),
    (66.0, 66.0, 66.0),
    (33.0, 33.0, 33.0),
)
SESSION_ALGORITHMS = ("stcr", "gca", "random-prev")
DEFAULT_CATEGORIES = ("apples", "bananas", "oranges")
ALIGNMENT_BINS = ("0-60", "60-120", "120-180")


class SessionError(ValueError):
    pass


class StaleOfferError(SessionError):
    """Response carried a token that is not the pending offer's."""


class UnknownSessionError(SessionError):
    pass


@dataclass
class SessionConfig:
    human_target: tuple[float, ...]
    agent_target: tuple[float, ...]
    algorithm: str = "stcr"
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    initial: float = 50.0
    time_limit: float = 600.0
    per_offer_timeout: float = 120.0
    offer_budget: int = 1000
    seed: int = 0

    def __post_init__(self):
        self.human_target = tuple(float(x) for x in self.human_target)
        self.agent_target = tuple(float(x) for x in self.agent_target)
        self.categories = tuple(self.categories)
        n = len(self.categories)
        if len(self.human_target) != n or len(self.agent_target) != n:
            raise SessionError("targets must match the category count")
        if any(not (0.0 <= x <= 100.0) for x in self.human_target):
            raise SessionError("human target components must lie in [0, 100]")
        if tuple(self.agent_target) not in AGENT_TARGET_MENU:
            raise SessionError(f"agent target must come from the menu {AGENT_TARGET_MENU}")
        if self.algorithm not in SESSION_ALGORITHMS:
            raise SessionError(f"algorithm must be one of {SESSION_ALGORITHMS}")
        if self.time_limit <= 0 or self.per_offer_timeout <= 0:
            raise SessionError("time limits must be positive")

    def to_json(self) -> dict:
        return {
            "human_target": list(self.human_target),
            "agent_target": list(self.agent_target),
            "algorithm": self.algorithm,
            "categories": list(self.categories),
            "initial": self.initial,
            "time_limit": self.time_limit,
            "per_offer_timeout": self.per_offer_timeout,
            "offer_budget": self.offer_budget,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SessionConfig":
        return cls(**obj)


def score(human_target, initial_state, final_state) -> tuple[float, float]:
    """Normalized L1 improvement toward the human's target: raw and clamped.

    1 means the target was reached exactly, 0 means no improvement. When the
    initial state already equals the target the ratio is undefined; the score
    degenerates to 1 if the final state still matches and 0 otherwise.
    """
    b = as_vector(human_target)
    s0 = as_vector(initial_state, b.shape[0])
    sT = as_vector(final_state, b.shape[0])
    denom = float(np.sum(np.abs(b - s0)))
    if denom <= 1e-12:
        raw = 1.0 if float(np.sum(np.abs(b - sT))) <= 1e-12 else 0.0
    else:
        raw = 1.0 - float(np.sum(np.abs(b - sT))) / denom
    return raw, max(raw, 0.0)


def alignment_bin(cfg: SessionConfig) -> str | None:
    """Bin (degrees) of the angle between each agent's target direction from
    the shared initial allocation; None when a direction vector vanishes."""
    s0 = np.full(len(cfg.categories), cfg.initial)
    da = np.asarray(cfg.agent_target) - s0
    db = np.asarray(cfg.human_target) - s0
    if float(np.linalg.norm(da)) <= 1e-12 or float(np.linalg.norm(db)) <= 1e-12:
        return None
    degrees = math.degrees(angle_between(da, db))
    if degrees < 60.0:
        return ALIGNMENT_BINS[0]
    if degrees < 120.0:
        return ALIGNMENT_BINS[1]
    return ALIGNMENT_BINS[2]


def _build_engine(cfg: SessionConfig) -> TradingEngine:
    n = len(cfg.categories)
    f_A = QuadraticUtility.target(cfg.agent_target)
    params = NegotiationParams(
        offer_budget=cfg.offer_budget,
        offer_norm=5.0 * math.sqrt(n),
        per_category_cap=5.0,
    )
    S = np.full(n, cfg.initial)
    if cfg.algorithm == "stcr":
        return DiscreteConeEngine(S, S, f_A, params)
    rng = np.random.default_rng(cfg.seed)
    if cfg.algorithm == "gca":
        return GreedyConcessionEngine(S, S, f_A, params, rng, update_interval=1)
    return RandomTradingEngine(S, S, f_A, params, rng, discrete=True, with_prev_heuristic=True)


@dataclass
class PendingOffer:
    token: int
    delta: np.ndarray
    issued_at: float


@dataclass
class Session:
    id: str
    config: SessionConfig
    engine: TradingEngine
    created_at: float
    metric_utility: QuadraticUtility  # human-benefit estimate for transcripts
    pending: PendingOffer | None = None
    tokens: list[int] = field(default_factory=list)  # token per resolved event
    next_token: int = 1
    terminal: bool = False
    terminal_reason: str | None = None
    score_raw: float | None = None
    score_clamped: float | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionManager:
    """Holds live sessions; per-session mutations are serialized by a lock.

    Sessions persist as append-only JSON-lines files keyed by id; restарting
    the manager replays non-terminal transcripts through fresh engines.
    """

    def __init__(self, data_dir=None, clock=time.time):
        self.clock = clock
        self.data_dir = Path(data_dir) if data_dir is not None else None
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self._rotation = 0
        self._global_lock = threading.Lock()
        if self.data_dir is not None:
            self._recover()

    # -- lifecycle ----------------------------------------------------------

    def rotate_assignment(self) -> tuple[tuple[float, ...], str]:
        """Round-robin over the target menu crossed with the algorithm set."""
        with self._global_lock:
            idx = self._rotation
            self._rotation += 1
        target = AGENT_TARGET_MENU[idx % len(AGENT_TARGET_MENU)]
        algorithm = SESSION_ALGORITHMS[(idx // len(AGENT_TARGET_MENU)) % len(SESSION_ALGORITHMS)]
        return target, algorithm

    def create_session(self, cfg: SessionConfig) -> tuple[Session, dict]:
        engine = _build_engine(cfg)
        session = Session(
            id=uuid.uuid4().hex[:12],
            config=cfg,
            engine=engine,
            created_at=self.clock(),
            metric_utility=QuadraticUtility.target(cfg.human_target),
        )
        with self._global_lock:
            self.sessions[session.id] = session
        self._persist_header(session)
        with session.lock:
            offer = self._propose(session)
            if offer is None:
                self._finalize(session)
        return session, self.snapshot(session.id)

    def get(self, sid: str) -> Session:
        try:
            return self.sessions[sid]
        except KeyError:
            raise UnknownSessionError(f"unknown session {sid!r}") from None

    # -- interaction ---------------------------------------------------------

    def respond(self, sid: str, token: int, action: str, counter=None) -> dict:
        session = self.get(sid)
        with session.lock:
            if session.terminal:
                return self._snapshot_locked(session)
            now = self.clock()
            if now - session.created_at > session.config.time_limit:
                self._finalize(session, EXTERNAL_STOP)
                return self._snapshot_locked(session)
            if session.pending is None or token != session.pending.token:
                raise StaleOfferError(f"token {token} does not match the pending offer")
            if now - session.pending.issued_at > session.config.per_offer_timeout:
                # Late answer: the pending offer times out as a tagged
                # rejection and the late action is discarded.
                self._resolve(session, REJECT, tags=["timeout"])
                return self._snapshot_locked(session)
            if action == "accept":
                self._resolve(session, ACCEPT)
            elif action == "reject":
                self._resolve(session, REJECT)
            elif action == "counter":
                if counter is None:
                    raise SessionError("counter action requires a counter vector")
                vec = as_vector(counter, len(session.config.categories))
                if not np.allclose(vec, np.round(vec), atol=1e-9):
                    raise SessionError("counteroffers must be integer vectors")
                self._resolve(session, CounterOffer(np.round(vec)))
            else:
                raise SessionError(f"unknown action {action!r}")
            return self._snapshot_locked(session)

    def end_session(self, sid: str) -> dict:
        session = self.get(sid)
        with session.lock:
            if not session.terminal:
                self._finalize(session, EXTERNAL_STOP)
            return self._snapshot_locked(session)

    # -- internals -----------------------------------------------------------

    def _propose(self, session: Session):
        offer = session.engine.propose()
        if offer is None:
            return None
        session.pending = PendingOffer(session.next_token, offer.delta.copy(), self.clock())
        session.next_token += 1
        return session.pending

    def _resolve(self, session: Session, response, tags: list[str] | None = None) -> None:
        pending = session.pending
        session.pending = None
        resp_benefit = None
        if response == ACCEPT:
            resp_benefit = benefit(session.metric_utility, session.engine.S_B, pending.delta, "responding")
        session.engine.observe(response, responding_benefit=resp_benefit, tags=tags)
        session.tokens.append(pending.token)
        self._persist_event(session, session.engine.events[-1], pending.token)
        if self._propose(session) is None:
            self._finalize(session)

    def _finalize(self, session: Session, reason: str | None = None) -> None:
        if session.terminal:
            return
        if reason is not None:
            session.engine.stop(reason)
        session.pending = None
        session.terminal = True
        session.terminal_reason = session.engine.terminal_reason or EXTERNAL_STOP
        s0 = np.full(len(session.config.categories), session.config.initial)
        session.score_raw, session.score_clamped = score(
            session.config.human_target, s0, session.engine.S_B
        )
        self._persist_terminal(session)

    # -- views ----------------------------------------------------------------

    def snapshot(self, sid: str) -> dict:
        session = self.get(sid)
        with session.lock:
            return self._snapshot_locked(session)

    def _snapshot_locked(self, session: Session) -> dict:
        now = self.clock()
        history = []
        for token, event in zip(session.tokens, session.engine.events):
            history.append(
                {
                    "token": token,
                    "offer": event.offer,
                    "response": event.response,
                    "stage": event.stage,
                    "S_B": event.S_B,
                    "tags": event.tags,
                }
            )
        snap = {
            "id": session.id,
            "categories": list(session.config.categories),
            "algorithm": session.config.algorithm,
            "agent_target": list(session.config.agent_target),
            "human_target": list(session.config.human_target),
            "S_A": session.engine.S_A.tolist(),
            "S_B": session.engine.S_B.tolist(),
            "history": history,
            "terminal": session.terminal,
            "created": datetime.fromtimestamp(session.created_at, tz=timezone.utc).isoformat(),
            "now": datetime.fromtimestamp(now, tz=timezone.utc).isoformat(),
            "time_remaining": max(0.0, session.config.time_limit - (now - session.created_at)),
        }
        if session.pending is not None:
            snap["offer"] = {
                "token": session.pending.token,
                "delta": session.pending.delta.tolist(),
                "expires_in": max(
                    0.0, session.config.per_offer_timeout - (now - session.pending.issued_at)
                ),
            }
        if session.terminal:
            snap["terminal_reason"] = session.terminal_reason
            snap["score"] = {"raw": session.score_raw, "clamped": session.score_clamped}
        return snap

    def transcript_lines(self, sid: str) -> str:
        session = self.get(sid)
        if self.data_dir is not None:
            path = self._path(session.id)
            if path.exists():
                return path.read_text()
        return self._render_transcript(session)

    def _render_transcript(self, session: Session) -> str:
        lines = [json.dumps(self._header_record(session))]
        for token, event in zip(session.tokens, session.engine.events):
            lines.append(json.dumps({"type": "event", "token": token, **event.to_json()}))
        if session.terminal:
            lines.append(json.dumps(self._terminal_record(session)))
        return "\n".join(lines) + "\n"

    # -- persistence -----------------------------------------------------------

    def _path(self, sid: str) -> Path:
        return self.data_dir / f"{sid}.jsonl"

    def _header_record(self, session: Session) -> dict:
        return {
            "type": "session",
            "id": session.id,
            "config": session.config.to_json(),
            "created": datetime.fromtimestamp(session.created_at, tz=timezone.utc).isoformat(),
        }

    def _terminal_record(self, session: Session) -> dict:
        return {
            "type": "terminal",
            "reason": session.terminal_reason,
            "score_raw": session.score_raw,
            "score_clamped": session.score_clamped,
        }

    def _persist_header(self, session: Session) -> None:
        if self.data_dir is None:
            return
        with self._path(session.id).open("w") as fh:
            fh.write(json.dumps(self._header_record(session)) + "\n")

    def _persist_event(self, session: Session, event, token: int) -> None:
        if self.data_dir is None:
            return
        with self._path(session.id).open("a") as fh:
            fh.write(json.dumps({"type": "event", "token": token, **event.to_json()}) + "\n")

    def _persist_terminal(self, session: Session) -> None:
        if self.data_dir is None:
            return
        with self._path(session.id).open("a") as fh:
            fh.write(json.dumps(self._terminal_record(session)) + "\n")

    def _recover(self) -> None:
        """Rebuild non-terminal sessions by replaying their recorded responses
        through a fresh (deterministic) engine."""
        for path in sorted(self.data_dir.glob("*.jsonl")):
            records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
            if not records or records[0].get("type") != "session":
                continue
            if any(r.get("type") == "terminal" for r in records):
                continue
            header = records[0]
            try:
                cfg = SessionConfig.from_json(header["config"])
            except (SessionError, TradingError, KeyError):
                continue
            engine = _build_engine(cfg)
            session = Session(
                id=header["id"],
                config=cfg,
                engine=engine,
                created_at=self.clock(),
                metric_utility=QuadraticUtility.target(cfg.human_target),
            )
            held = None
            for record in records[1:]:
                if record.get("type") != "event":
                    continue
                offer = engine.propose()
                if offer is None:
                    break
                if not np.allclose(offer.delta, record["offer"], atol=1e-9):
                    # replay diverged from the recorded offers (config drift);
                    # keep the consistent prefix rather than corrupt the state
                    held = offer
                    break
                response = record["response"]
                if response == "counter" and record.get("counter") is not None:
                    engine.observe(CounterOffer(np.asarray(record["counter"], dtype=float)))
                elif response == "counter":
                    engine.observe(REJECT)
                else:
                    engine.observe(response, responding_benefit=record.get("responding_benefit"))
                session.tokens.append(record["token"])
                session.next_token = max(session.next_token, record["token"] + 1)
            session.next_token = max(session.next_token, len(session.tokens) + 1)
            with session.lock:
                if held is not None:
                    session.pending = PendingOffer(session.next_token, held.delta.copy(), self.clock())
                    session.next_token += 1
                elif self._propose(session) is None:
                    self._finalize(session)
            self.sessions[session.id] = session
