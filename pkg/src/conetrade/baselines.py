"""Comparison baselines: uniform random trading, random trading with
momentum, and the greedy concession algorithm with belief updates over
sampled linear responder weights. All baselines only emit feasible offers
that benefit the offering agent."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    NO_FEASIBLE_OFFER,
    NegotiationParams,
    NegotiationTranscript,
    Responder,
    TradingEngine,
    drive,
)
from .geometry import as_vector
from .trading import OfferLimits, QuadraticUtility, TradingError, benefit, feasible_scale, is_feasible

_TOL = 1e-9
_MAX_SAMPLE_RETRIES = 50

# Defaults quoted with the reproducibility settings.
DEVIATION_INTERVAL = 0.05
MAX_DEVIATION = 5.0
GCA_SHRINK = 0.1
GCA_WEIGHTS = 100
GCA_TEMPERATURE = 0.02


def sample_uniform_offer(
    S_A,
    S_B,
    f_A,
    limits: OfferLimits,
    rng: np.random.Generator,
    discrete: bool = False,
) -> np.ndarray | None:
    """Uniform random direction scaled to the largest feasible magnitude.

    The direction flips when the trade does not benefit the offering agent; a
    flipped offer can still be harmful at a near-optimal point, in which case
    it is dropped and resampled (bounded retries).
    """
    S_A = as_vector(S_A)
    S_B = as_vector(S_B, S_A.shape[0])
    n = S_A.shape[0]
    for _ in range(_MAX_SAMPLE_RETRIES):
        v = rng.standard_normal(n)
        norm = float(np.linalg.norm(v))
        if norm <= _TOL:
            continue
        v /= norm
        candidates = []
        t = feasible_scale(S_A, S_B, v, limits)
        if t > _TOL:
            candidates.append(t * v)
        if not candidates:
            continue
        delta = candidates[0]
        if benefit(f_A, S_A, delta, "offering") <= 0.0:
            t_flip = feasible_scale(S_A, S_B, -v, limits)
            if t_flip <= _TOL:
                continue
            delta = -t_flip * v
        if discrete:
            delta = np.clip(
                np.round(delta),
                -(limits.per_category_cap or limits.norm_cap),
                limits.per_category_cap or limits.norm_cap,
            )
            if not np.any(delta) or not is_feasible(S_A, S_B, delta, limits):
                continue
        if benefit(f_A, S_A, delta, "offering") >= 0.0:
            return delta
    return None


class RandomTradingEngine(TradingEngine):
    """Uniform random trading, optionally re-offering the last accepted trade."""

    name = "random"

    def __init__(
        self,
        S_A,
        S_B,
        f_A,
        params: NegotiationParams,
        rng: np.random.Generator,
        discrete: bool = False,
        with_prev_heuristic: bool = False,
    ):
        params.use_prev_trade_heuristic = with_prev_heuristic
        super().__init__(S_A, S_B, f_A, params, discrete=discrete)
        self.rng = rng
        if with_prev_heuristic:
            self.name = "random-prev"

    def _algorithm_offer(self):
        delta = sample_uniform_offer(self.S_A, self.S_B, self.f_A, self.limits, self.rng, self.discrete)
        if delta is None:
            return None
        return delta, "random"


class MomentumTradingEngine(TradingEngine):
    """Random trading with momentum: after the first accepted trade, proposals
    deviate from the previous direction by a growing random perturbation,
    reset on every acceptance."""

    name = "random-momentum"

    def __init__(
        self,
        S_A,
        S_B,
        f_A,
        params: NegotiationParams,
        rng: np.random.Generator,
        discrete: bool = False,
        d_interval: float = DEVIATION_INTERVAL,
        d_max: float = MAX_DEVIATION,
    ):
        # The previous trade re-offer is inherent to the momentum scheme.
        params.use_prev_trade_heuristic = True
        super().__init__(S_A, S_B, f_A, params, discrete=discrete)
        self.rng = rng
        self.d_interval = d_interval
        self.d_max = d_max
        self.d_dev = 0.0

    def _on_accept(self, delta, stage):
        self.d_dev = 0.0

    def _on_reject(self, delta, stage):
        # every rejection after the first trade grows the deviation, including
        # the re-offered previous trade that opens each search
        if self.prev_trade is not None and stage in ("momentum", "heuristic"):
            self.d_dev = min(self.d_dev + self.d_interval, self.d_max)

    def _algorithm_offer(self):
        if self.prev_trade is None:
            delta = sample_uniform_offer(self.S_A, self.S_B, self.f_A, self.limits, self.rng, self.discrete)
            return None if delta is None else (delta, "random")
        base = self.prev_trade / max(float(np.linalg.norm(self.prev_trade)), _TOL)
        for _ in range(_MAX_SAMPLE_RETRIES):
            v = self.rng.standard_normal(self.S_A.shape[0])
            norm = float(np.linalg.norm(v))
            if norm <= _TOL:
                continue
            direction = base + self.d_dev * (v / norm)
            dnorm = float(np.linalg.norm(direction))
            if dnorm <= _TOL:
                continue
            direction /= dnorm
            t = feasible_scale(self.S_A, self.S_B, direction, self.limits)
            if t <= _TOL:
                continue
            delta = t * direction
            if self.discrete:
                delta = np.round(delta)
                if not np.any(delta) or not is_feasible(self.S_A, self.S_B, delta, self.limits):
                    continue
            if benefit(self.f_A, self.S_A, delta, "offering") >= 0.0:
                return delta, "momentum"
        return None


@dataclass
class BeliefState:
    """Belief over sampled linear responder weights.

    Probabilities stay nonnegative and sum to one after every update.
    """

    weights: np.ndarray  # (k, n), unit rows
    probs: np.ndarray  # (k,)
    shrink: float = GCA_SHRINK
    update_interval: int = 1
    softmax_temperature: float = GCA_TEMPERATURE

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        P = np.asarray(self.probs, dtype=float)
        if W.ndim != 2 or P.shape != (W.shape[0],):
            raise TradingError("weights must be (k, n) with matching probabilities")
        norms = np.linalg.norm(W, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise TradingError("belief weights must be unit norm")
        if np.any(P < 0) or abs(float(P.sum()) - 1.0) > 1e-12:
            raise TradingError("belief probabilities must be a distribution")
        self.weights = W
        self.probs = P

    @classmethod
    def sample(
        cls,
        n: int,
        rng: np.random.Generator,
        n_weights: int = GCA_WEIGHTS,
        shrink: float = GCA_SHRINK,
        update_interval: int = 1,
        temperature: float = GCA_TEMPERATURE,
    ) -> "BeliefState":
        raw = rng.standard_normal((n_weights, n))
        W = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        return cls(W, np.full(n_weights, 1.0 / n_weights), shrink, update_interval, temperature)


def gca_expected_sort(S_A, S_B, f_A, beliefs: BeliefState, candidates: np.ndarray) -> np.ndarray:
    """Candidates in non-increasing order of expected offering benefit.

    A weight predicts acceptance of T when the responder's linear score
    improves, i.e. <-T, w> > 0; the acceptance probability is the total
    belief mass of such weights. Ties break lexicographically on the offer.
    """
    if candidates.size == 0:
        return candidates
    S_A = as_vector(S_A)
    cands = np.asarray(candidates, dtype=float)
    accept = (cands @ beliefs.weights.T) < 0.0  # <-T, w> > 0
    p_accept = accept @ beliefs.probs
    gains = np.asarray([benefit(f_A, S_A, T, "offering") for T in cands])
    scores = p_accept * gains
    order = sorted(range(len(cands)), key=lambda i: (-scores[i], tuple(cands[i])))
    return cands[order]


def gca_belief_update(beliefs: BeliefState, rejected) -> BeliefState:
    """Scale down weights that claimed a rejected offer should have been
    accepted, then renormalize."""
    P = beliefs.probs.copy()
    for T in rejected:
        contradicted = (beliefs.weights @ as_vector(T, beliefs.weights.shape[1])) < 0.0
        P[contradicted] *= beliefs.shrink
    total = float(P.sum())
    if total < 1e-300:
        P = np.full_like(P, 1.0 / len(P))  # collapse guard: re-uniformize
    else:
        P /= total
    return BeliefState(beliefs.weights, P, beliefs.shrink, beliefs.update_interval, beliefs.softmax_temperature)


def gca_softmax_smooth(beliefs: BeliefState) -> BeliefState:
    """Softmax-smooth the probabilities (applied after each accepted trade)."""
    z = beliefs.probs / beliefs.softmax_temperature
    z -= float(np.max(z))  # overflow guard
    e = np.exp(z)
    return BeliefState(
        beliefs.weights, e / float(e.sum()), beliefs.shrink, beliefs.update_interval, beliefs.softmax_temperature
    )


def enumerate_integer_offers(S_A, S_B, limits: OfferLimits) -> np.ndarray:
    """All feasible nonzero integer offers within the caps."""
    S_A = as_vector(S_A)
    S_B = as_vector(S_B, S_A.shape[0])
    n = S_A.shape[0]
    cap = int(math.floor(min(limits.per_category_cap or limits.norm_cap, limits.norm_cap) + _TOL))
    axis = range(-cap, cap + 1)
    grid = np.asarray(list(itertools.product(axis, repeat=n)), dtype=float)
    norms = np.linalg.norm(grid, axis=1)
    mask = (norms > 0.5) & (norms <= limits.norm_cap + _TOL)
    mask &= np.all(S_A + grid >= -_TOL, axis=1) & np.all(S_B - grid >= -_TOL, axis=1)
    return grid[mask]


class GreedyConcessionEngine(TradingEngine):
    """Greedy concession baseline: offer candidates by expected benefit,
    update beliefs on rejection cadence, softmax-smooth on acceptance.

    Discrete mode only; the candidate enumeration requires integers.
    """

    name = "gca"

    def __init__(
        self,
        S_A,
        S_B,
        f_A,
        params: NegotiationParams,
        rng: np.random.Generator,
        n_weights: int = GCA_WEIGHTS,
        shrink: float = GCA_SHRINK,
        update_interval: int = 1,
        temperature: float = GCA_TEMPERATURE,
    ):
        params.use_prev_trade_heuristic = False
        super().__init__(S_A, S_B, f_A, params, discrete=True)
        self.beliefs = BeliefState.sample(
            self.S_A.shape[0], rng, n_weights, shrink, update_interval, temperature
        )
        self._queue: list[np.ndarray] | None = None
        self._rejected_batch: list[np.ndarray] = []
        self._offers_since_update = 0

    def _resort(self, candidates: np.ndarray) -> None:
        self._queue = list(gca_expected_sort(self.S_A, self.S_B, self.f_A, self.beliefs, candidates))

    def _on_accept(self, delta, stage):
        self.beliefs = gca_softmax_smooth(self.beliefs)
        self._queue = None  # state changed: re-enumerate and re-sort
        self._rejected_batch = []
        self._offers_since_update = 0

    def _on_reject(self, delta, stage):
        self._rejected_batch.append(np.asarray(delta, dtype=float))
        self._offers_since_update += 1
        if self._offers_since_update % self.beliefs.update_interval == 0:
            self.beliefs = gca_belief_update(self.beliefs, self._rejected_batch)
            self._rejected_batch = []
            if self._queue:
                self._resort(np.asarray(self._queue))

    def _on_counter(self, counter):
        pass  # the pending offer was already booked as a rejection

    def _algorithm_offer(self):
        if self._queue is None:
            self._resort(enumerate_integer_offers(self.S_A, self.S_B, self.limits))
        while self._queue:
            delta = self._queue.pop(0)
            if benefit(self.f_A, self.S_A, delta, "offering") > 0.0:
                return delta, "gca"
        return None  # candidate set exhausted


def run_random_baseline(
    S_A,
    S_B,
    f_A: QuadraticUtility,
    responder: Responder,
    params: NegotiationParams,
    rng: np.random.Generator,
    discrete: bool = False,
    with_prev_heuristic: bool = False,
    f_B: QuadraticUtility | None = None,
) -> NegotiationTranscript:
    engine = RandomTradingEngine(
        S_A, S_B, f_A, params, rng, discrete=discrete, with_prev_heuristic=with_prev_heuristic
    )
    return drive(engine, responder, f_B=f_B)


def run_momentum_baseline(
    S_A,
    S_B,
    f_A: QuadraticUtility,
    responder: Responder,
    params: NegotiationParams,
    rng: np.random.Generator,
    discrete: bool = False,
    d_interval: float = DEVIATION_INTERVAL,
    d_max: float = MAX_DEVIATION,
    f_B: QuadraticUtility | None = None,
) -> NegotiationTranscript:
    engine = MomentumTradingEngine(
        S_A, S_B, f_A, params, rng, discrete=discrete, d_interval=d_interval, d_max=d_max
    )
    return drive(engine, responder, f_B=f_B)


def run_gca(
    S_A,
    S_B,
    f_A: QuadraticUtility,
    responder: Responder,
    params: NegotiationParams,
    rng: np.random.Generator,
    update_interval: int = 1,
    n_weights: int = GCA_WEIGHTS,
    shrink: float = GCA_SHRINK,
    temperature: float = GCA_TEMPERATURE,
    f_B: QuadraticUtility | None = None,
) -> NegotiationTranscript:
    engine = GreedyConcessionEngine(
        S_A,
        S_B,
        f_A,
        params,
        rng,
        n_weights=n_weights,
        shrink=shrink,
        update_interval=update_interval,
        temperature=temperature,
    )
    return drive(engine, responder, f_B=f_B)
