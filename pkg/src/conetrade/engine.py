"""Shared negotiation machinery: one engine instance is a single-threaded
offer -> response -> mutate state machine. Distinct negotiations are
independent; the responder may take arbitrarily long to answer (live humans),
so the engine never blocks, it just exposes propose()/observe().
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import as_vector
from .trading import (
    ACCEPT,
    REJECT,
    OfferLimits,
    QuadraticUtility,
    TradeOffer,
    TradingError,
    active_categories,
    apply_trade,
    benefit,
    is_feasible,
)

# Terminal reasons recorded on transcripts.
BUDGET = "budget"
ANGLE_THRESHOLD = "angle_threshold"
NO_FEASIBLE_OFFER = "no_feasible_offer"
EXHAUSTED_CATEGORIES = "exhausted_categories"
EXTERNAL_STOP = "external_stop"

_EMIT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CounterOffer:
    """Responder's structured counteroffer, expressed as the offering agent's
    gain vector (same sign convention as TradeOffer.delta)."""

    delta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", as_vector(self.delta))


@dataclass
class NegotiationParams:
    offer_budget: int
    offer_norm: float
    angle_threshold: float = 1e-5
    per_category_cap: float | None = None
    cone_expansion_rate: float = 0.02  # warm-start angle growth per unit trade norm
    use_prev_trade_heuristic: bool = True
    use_cone_warm_start: bool = True
    # Overshooting offers halve down to this fraction of offer_norm before the
    # direction counts as hopeless. Any strictly positive directional
    # derivative admits a beneficial magnitude, so the floor only cuts off
    # directions where the offering agent is (numerically) at its optimum.
    halving_floor_fraction: float = 2.0**-20

    def __post_init__(self):
        if self.offer_budget < 1:
            raise TradingError("offer budget must be >= 1")
        if self.offer_norm <= 0 or self.angle_threshold <= 0 or self.cone_expansion_rate < 0:
            raise TradingError("invalid negotiation parameters")

    @property
    def limits(self) -> OfferLimits:
        return OfferLimits(self.offer_norm, self.per_category_cap)


@dataclass
class TranscriptEvent:
    step: int
    stage: str
    offer: list[float]
    response: str
    S_A: list[float]
    S_B: list[float]
    offering_benefit: float
    responding_benefit: float
    theta: float | None = None
    tau: list[float] | None = None
    active: list[int] | None = None
    cr_run: int | None = None
    tags: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "step": self.step,
            "stage": self.stage,
            "offer": self.offer,
            "response": self.response,
            "S_A": self.S_A,
            "S_B": self.S_B,
            "offering_benefit": self.offering_benefit,
            "responding_benefit": self.responding_benefit,
            "theta": self.theta,
            "tau": self.tau,
        }
        if self.active is not None:
            out["active"] = self.active
        if self.cr_run is not None:
            out["cr_run"] = self.cr_run
        if self.tags:
            out["tags"] = self.tags
        if self.extra:
            out.update(self.extra)
        return out


@dataclass
class NegotiationTranscript:
    """Ordered audit record of one negotiation."""

    algorithm: str
    events: list[TranscriptEvent] = field(default_factory=list)
    terminal_reason: str | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def offers_made(self) -> int:
        return len(self.events)

    @property
    def accepted(self) -> list[TranscriptEvent]:
        return [e for e in self.events if e.response == ACCEPT]

    def cumulative(self, kind: str, budget: int | None = None) -> np.ndarray:
        """Cumulative realized benefit indexed by offer count (1-based), padded
        with the final value up to ``budget``."""
        pick = {
            "societal": lambda e: e.offering_benefit + e.responding_benefit,
            "offering": lambda e: e.offering_benefit,
            "responding": lambda e: e.responding_benefit,
        }[kind]
        values = np.cumsum([pick(e) for e in self.events]) if self.events else np.zeros(0)
        m = budget if budget is not None else len(values)
        out = np.zeros(m)
        if len(values):
            upto = min(m, len(values))
            out[:upto] = values[:upto]
            if upto < m:
                out[upto:] = values[upto - 1]
        return out

    def to_jsonl(self) -> str:
        header = {"type": "header", "algorithm": self.algorithm, **self.metadata}
        lines = [json.dumps(header)]
        lines += [json.dumps({"type": "event", **e.to_json()}) for e in self.events]
        lines.append(json.dumps({"type": "terminal", "reason": self.terminal_reason}))
        return "\n".join(lines) + "\n"


class TradingEngine:
    """Base offer engine: budget accounting, the previous-trade heuristic,
    counteroffer echoes, active-category bookkeeping, and event recording.

    Subclasses implement ``_algorithm_offer`` (and the response hooks) to
    supply the actual offer strategy. Every emitted offer is feasible and
    nonnegative for the offering agent's gradient at emission time.
    """

    name = "engine"

    def __init__(self, S_A, S_B, f_A, params: NegotiationParams, discrete: bool = False):
        self.S_A = as_vector(S_A).copy()
        self.S_B = as_vector(S_B, self.S_A.shape[0]).copy()
        self.f_A = f_A
        self.params = params
        self.discrete = discrete
        self.limits = params.limits
        self.active: list[int] = active_categories(self.S_A, self.S_B)
        self.offers_made = 0
        self.prev_trade: np.ndarray | None = None
        self.terminal_reason: str | None = None
        self.events: list[TranscriptEvent] = []
        self._pending: TradeOffer | None = None
        self._pending_stage: str | None = None
        self._pending_cr_run: int | None = None
        self._heuristic_tried = False
        self._echo: np.ndarray | None = None
        self._pending_tags: list[str] = []
        self._pending_extra: dict = {}

    # -- subclass surface ---------------------------------------------------

    def _algorithm_offer(self) -> tuple[np.ndarray, str] | None:
        raise NotImplementedError

    def _on_accept(self, delta: np.ndarray, stage: str) -> None:
        pass

    def _on_reject(self, delta: np.ndarray, stage: str) -> None:
        pass

    def _on_counter(self, counter: np.ndarray) -> None:
        pass

    def _on_active_change(self) -> None:
        pass

    def _cone_snapshot(self) -> tuple[list[float], float] | None:
        return None

    def _cr_run(self) -> int | None:
        return None

    # -- heuristic ----------------------------------------------------------

    def _stage1_candidate(self) -> np.ndarray | None:
        """Re-offer the previously accepted trade when it is still feasible and
        still benefits the offering agent."""
        T = self.prev_trade
        if T is None or not is_feasible(self.S_A, self.S_B, T, self.limits):
            return None
        if float(np.dot(T, self.f_A.gradient(self.S_A))) < -_EMIT_TOL:
            return None
        if benefit(self.f_A, self.S_A, T, "offering") < -_EMIT_TOL:
            return None
        return T

    # -- protocol -----------------------------------------------------------

    def stop(self, reason: str = EXTERNAL_STOP) -> None:
        if self.terminal_reason is None:
            self.terminal_reason = reason
        self._pending = None

    def propose(self) -> TradeOffer | None:
        """Compute the next pending offer, or None once the negotiation is over."""
        if self._pending is not None:
            raise TradingError("previous offer still pending a response")
        if self.terminal_reason is not None:
            return None
        if self.offers_made >= self.params.offer_budget:
            self.terminal_reason = BUDGET
            return None
        if len(self.active) < 2:
            self.terminal_reason = EXHAUSTED_CATEGORIES
            return None

        delta: np.ndarray | None = None
        stage = ""
        if self._echo is not None:
            cand, self._echo = self._echo, None
            # Echoed counteroffers are the responder's own proposal; they skip
            # the offer-magnitude caps (which bound the engine's Taylor error)
            # but must still leave both states nonnegative.
            if np.all(self.S_A + cand >= -_EMIT_TOL) and np.all(self.S_B - cand >= -_EMIT_TOL):
                delta, stage = cand, "counter-echo"
        if delta is None and self.params.use_prev_trade_heuristic and not self._heuristic_tried:
            self._heuristic_tried = True
            cand = self._stage1_candidate()
            if cand is not None:
                delta, stage = cand, "heuristic"
        if delta is None:
            result = self._algorithm_offer()
            if result is None:
                if self.terminal_reason is None:
                    self.terminal_reason = NO_FEASIBLE_OFFER
                return None
            delta, stage = result

        delta = as_vector(delta, self.S_A.shape[0])
        if stage != "counter-echo" and not is_feasible(self.S_A, self.S_B, delta, self.limits):
            raise TradingError(f"engine emitted an infeasible offer at stage {stage}")
        if float(np.dot(delta, self.f_A.gradient(self.S_A))) < -1e-6:
            raise TradingError(f"engine emitted a gradient-harmful offer at stage {stage}")
        if self.discrete:
            delta = np.round(delta)
        self.offers_made += 1
        self._pending = TradeOffer(delta, discrete=self.discrete)
        self._pending_stage = stage
        self._pending_cr_run = self._cr_run()
        return self._pending

    def observe(self, response, responding_benefit: float | None = None, tags=None) -> None:
        """Feed the responder's answer for the pending offer."""
        if self._pending is None:
            raise TradingError("no pending offer to respond to")
        offer = self._pending
        stage = self._pending_stage or ""
        self._pending = None
        self._pending_stage = None
        delta = offer.delta
        event_tags = list(self._pending_tags) + list(tags or [])
        extra = dict(self._pending_extra)
        self._pending_tags = []
        self._pending_extra = {}

        counter = response if isinstance(response, CounterOffer) else None
        label = "counter" if counter is not None else str(response)
        if label not in (ACCEPT, REJECT, "counter"):
            raise TradingError(f"unknown response {response!r}")

        offering_benefit = 0.0
        resp_benefit = 0.0
        if label == ACCEPT:
            offering_benefit = benefit(self.f_A, self.S_A, delta, "offering")
            resp_benefit = float(responding_benefit) if responding_benefit is not None else 0.0
            self.S_A, self.S_B = apply_trade(self.S_A, self.S_B, delta)
            self.prev_trade = delta.copy()
            self._heuristic_tried = False
            self._on_accept(delta, stage)
            new_active = active_categories(self.S_A, self.S_B)
            if new_active != self.active:
                self.active = new_active
                self._on_active_change()
        else:
            self._on_reject(delta, stage)
            if counter is not None:
                extra["counter"] = counter.delta.tolist()
                if float(np.linalg.norm(counter.delta)) <= _EMIT_TOL:
                    event_tags.append("empty-counteroffer-ignored")
                else:
                    self._on_counter(counter.delta)
                    counter_ok = bool(
                        np.all(self.S_A + counter.delta >= -_EMIT_TOL)
                        and np.all(self.S_B - counter.delta >= -_EMIT_TOL)
                    )
                    if counter_ok and benefit(self.f_A, self.S_A, counter.delta, "offering") >= -_EMIT_TOL:
                        self._echo = counter.delta.copy()
                        event_tags.append("counteroffer-beneficial")
                    else:
                        event_tags.append("counteroffer-not-beneficial")

        snapshot = self._cone_snapshot()
        self.events.append(
            TranscriptEvent(
                step=len(self.events) + 1,
                stage=stage,
                offer=delta.tolist(),
                response=label,
                S_A=self.S_A.tolist(),
                S_B=self.S_B.tolist(),
                offering_benefit=float(offering_benefit),
                responding_benefit=float(resp_benefit),
                theta=None if snapshot is None else snapshot[1],
                tau=None if snapshot is None else snapshot[0],
                active=list(self.active),
                cr_run=self._pending_cr_run,
                tags=event_tags,
                extra=extra,
            )
        )
        self._pending_cr_run = None

    def transcript(self, **metadata) -> NegotiationTranscript:
        meta = {
            "n": int(self.S_A.shape[0]),
            "mode": "discrete" if self.discrete else "continuous",
            "offer_budget": self.params.offer_budget,
            "offer_norm": self.params.offer_norm,
            "angle_threshold": self.params.angle_threshold,
        }
        meta.update(metadata)
        return NegotiationTranscript(
            algorithm=self.name,
            events=list(self.events),
            terminal_reason=self.terminal_reason,
            metadata=meta,
        )


Responder = Callable[[np.ndarray, np.ndarray], object]


def greedy_responder(f_B: QuadraticUtility) -> Responder:
    """Simulated greedily rational responder for a known utility."""

    def _respond(delta: np.ndarray, S_B: np.ndarray):
        from .trading import respond

        return respond(f_B, S_B, delta)

    return _respond


def drive(engine: TradingEngine, responder: Responder, f_B: QuadraticUtility | None = None) -> NegotiationTranscript:
    """Run an engine to termination against a responder oracle.

    When the responder's utility is known, realized responding benefits are
    recorded on accepted trades.
    """
    while True:
        offer = engine.propose()
        if offer is None:
            break
        response = responder(offer.delta, engine.S_B)
        resp_benefit = None
        if f_B is not None and response == ACCEPT:
            resp_benefit = benefit(f_B, engine.S_B, offer.delta, "responding")
        engine.observe(response, responding_benefit=resp_benefit)
    return engine.transcript()
