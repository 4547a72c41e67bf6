"""Cone-refinement trading for continuous offers.

The offering agent maintains a cone of candidate responder-gradient
directions. Axis-aligned probe offers fix the gradient's orthant, then
batches of mutually orthogonal offers cut the cone: each rejection keeps the
halfspace on the offer's side, and after n-1 rejections the remaining
directions are enclosed by a new cone whose half-angle shrinks by the sine
factor sqrt(1 - 1/(2n)). The enlarged factor (vs. the exact-cut 1 - 1/n rule)
absorbs sign errors from two-point comparisons near the responder's optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    ANGLE_THRESHOLD,
    NO_FEASIBLE_OFFER,
    NegotiationParams,
    NegotiationTranscript,
    Responder,
    TradingEngine,
    drive,
)
from .geometry import (
    GeometryError,
    GradientCone,
    Halfspace,
    angle_between,
    as_vector,
    orthonormal_extension,
    unit,
)
from .trading import QuadraticUtility, benefit, feasible_scale, is_feasible

_TOL = 1e-9
# Offers scaled below this fraction of the nominal magnitude are treated as
# infeasible in their direction.
_FEASIBLE_FLOOR_FRACTION = 0.1


@dataclass
class RefinementState:
    """Live refinement bookkeeping for one cone-refinement run.

    ``batch`` holds the offers rejected since the last cone update (in active
    subspace coordinates); in continuous mode they are mutually orthogonal
    and orthogonal to the cone direction. ``quadrant`` accumulates the signed
    axis probes. Counteroffer cuts live in ``extra_constraints`` as
    halfspaces on the responder's gradient.
    """

    cone: GradientCone | None = None
    batch: list[np.ndarray] = field(default_factory=list)
    quadrant: np.ndarray | None = None
    offers_made: int = 0
    extra_constraints: list[Halfspace] = field(default_factory=list)


def refine_cone(cone: GradientCone, batch: list[np.ndarray]) -> GradientCone:
    """Enclose cone ∩ (rejected-offer halfspaces) with a smaller cone.

    Requires the full batch of n-1 offers, mutually orthogonal and orthogonal
    to the cone direction. The new direction averages the prior direction
    with its rotations towards each rejected offer; the new angle satisfies
    sin(theta')/sin(theta) = sqrt(1 - 1/(2n)).
    """
    n = len(batch) + 1
    if n < 2:
        raise GeometryError("refinement needs at least one rejected offer")
    tau = cone.direction
    units = [unit(b) for b in batch]
    for i, ui in enumerate(units):
        if abs(float(np.dot(ui, tau))) > 1e-6:
            raise GeometryError("batch offer not orthogonal to the cone direction")
        for uj in units[i + 1 :]:
            if abs(float(np.dot(ui, uj))) > 1e-6:
                raise GeometryError("batch offers not mutually orthogonal")
    theta = cone.angle
    total = tau.copy()
    for ui in units:
        total += tau * math.cos(theta) + ui * math.sin(theta)
    new_tau = unit(total)
    new_theta = math.asin(math.sin(theta) * math.sqrt(1.0 - 1.0 / (2 * n)))
    return GradientCone(new_tau, new_theta)


def warm_start_cone(prev: GradientCone, accepted_delta, expansion_rate: float) -> GradientCone | None:
    """Expand the previous cone after an accepted trade instead of re-probing.

    Returns None when the expansion exceeds pi/2; the quadrant stage must
    rerun in that case. A zero rate leaves the cone unchanged, which is
    exact for linear responder utilities.
    """
    grown = prev.angle + expansion_rate * float(np.linalg.norm(as_vector(accepted_delta)))
    if grown > math.pi / 2:
        return None
    return GradientCone(prev.direction, grown)


def ensure_beneficial(
    delta: np.ndarray,
    f_A,
    S_A: np.ndarray,
    floor: float,
    discrete: bool = False,
) -> np.ndarray | None:
    """Shrink an overshooting offer until it actually benefits the offering agent.

    Continuous offers are halved down to ``floor``; past the floor the
    direction is hopeless (the agent is near-optimal along it) and None is
    returned so the caller can exclude the direction. Discrete offers shrink
    through integer multiples and keep the smallest one even at a bounded
    loss, since integer rounding may make a zero-loss magnitude unreachable.
    """
    delta = as_vector(delta)
    if benefit(f_A, S_A, delta, "offering") >= -1e-12:
        return delta
    if discrete:
        ints = np.round(delta).astype(int)
        if not np.any(ints):
            return None
        g = int(np.gcd.reduce(np.abs(ints[ints != 0])))
        base = ints.astype(float) / g
        for j in range(g - 1, 0, -1):
            cand = base * j
            if benefit(f_A, S_A, cand, "offering") >= -1e-12:
                return cand
        return base
    shrunk = delta / 2.0
    while float(np.linalg.norm(shrunk)) >= floor:
        if benefit(f_A, S_A, shrunk, "offering") >= -1e-12:
            return shrunk
        shrunk = shrunk / 2.0
    return None


def incorporate_counteroffer(state: RefinementState, counter_delta) -> bool:
    """Record a counteroffer as the halfspace <-T, grad_B> >= 0.

    Returns False (and leaves the state untouched) for a zero counteroffer.
    """
    d = as_vector(counter_delta)
    if float(np.linalg.norm(d)) <= _TOL:
        return False
    state.extra_constraints.append(Halfspace(-d, 0.0))
    return True


def _orthonormalize(vectors, n: int) -> list[np.ndarray]:
    """Gram-Schmidt keeping only independent directions."""
    out: list[np.ndarray] = []
    for v in vectors:
        w = as_vector(v, n).copy()
        for b in out:
            w -= np.dot(w, b) * b
        norm = float(np.linalg.norm(w))
        if norm > 1e-8:
            out.append(w / norm)
    return out


def min_angle_to_wedge(tau: np.ndarray, g: np.ndarray, t: np.ndarray) -> float:
    """Minimal angle from unit ``tau`` to the wedge {x: <g,x> >= 0, <t,x> >= 0}.

    Exact: split tau into its component inside span(g, t) and the orthogonal
    remainder. The wedge constrains only the span part (a 2-D wedge whose
    optimum lies at tau's span direction or an extreme ray); the remainder is
    unconstrained and contributes quadratically.
    """
    n = tau.shape[0]
    if float(np.dot(g, tau)) >= 0.0 and float(np.dot(t, tau)) >= 0.0:
        return 0.0
    span = _orthonormalize([g, t], n)
    tau_span = np.zeros(n)
    for b in span:
        tau_span += np.dot(tau, b) * b
    rest = float(np.linalg.norm(tau - tau_span))
    if len(span) == 1:
        ghat = span[0] if float(np.dot(span[0], g)) > 0 else -span[0]
        if float(np.dot(g, t)) < 0.0:
            # opposite halfspaces: the wedge degenerates to the hyperplane g=0
            c_star = 0.0
        else:
            c_star = float(np.dot(tau, ghat))
    else:
        c_star = None
        if float(np.dot(g, tau_span)) >= -1e-15 and float(np.dot(t, tau_span)) >= -1e-15:
            c_star = float(np.linalg.norm(tau_span))
        else:
            rays = []
            for a, other in ((g, t), (t, g)):
                ahat = a / float(np.linalg.norm(a))
                edge = None
                for b in span:
                    w = b - np.dot(b, ahat) * ahat
                    if float(np.linalg.norm(w)) > 1e-12:
                        edge = w / float(np.linalg.norm(w))
                        break
                if edge is None:
                    continue
                if float(np.dot(other, edge)) < 0.0:
                    edge = -edge
                rays.append(edge)
            c_star = max((float(np.dot(tau_span, r)) for r in rays), default=0.0)
    if n == len(span):
        value = c_star  # no free orthogonal directions to mix in
    else:
        value = math.sqrt(max(c_star, 0.0) ** 2 + rest**2)
    return float(np.arccos(np.clip(value, -1.0, 1.0)))


def orthogonal_offer_directions(
    cone: GradientCone,
    batch: list[np.ndarray],
    excluded: list[np.ndarray],
    grad: np.ndarray,
    n: int,
) -> list[np.ndarray] | None:
    """Unit offer directions orthogonal to the cone direction, the pending
    batch, and the excluded lines, sorted by decreasing offering-agent gain.

    The directions come from a deterministic orthonormal frame of the
    admissible complement rather than the gradient's projection: a frame
    spreads the gradient's complement component across all batch offers,
    whereas offering the projection itself would leave every later offer in
    the batch exactly gradient-orthogonal. Signs point along the gradient
    (ties keep the + frame vector). Returns None when the complement is
    empty.
    """
    fixed = _orthonormalize([cone.direction] + list(batch) + list(excluded), n)
    if len(fixed) >= n:
        return None
    frame = orthonormal_extension(fixed, n)
    signed = [w if float(np.dot(grad, w)) >= 0 else -w for w in frame]
    signed.sort(key=lambda w: -float(np.dot(grad, w)))
    return signed


def generate_orthogonal_offer(
    state: RefinementState,
    grad: np.ndarray,
    S_A: np.ndarray,
    S_B: np.ndarray,
    limits,
    offer_norm: float,
    excluded: list[np.ndarray] | None = None,
) -> np.ndarray | None:
    """Best feasible orthogonal offer for the current refinement state, scaled
    to the offer magnitude (or the largest feasible fraction of it)."""
    n = S_A.shape[0]
    candidates = orthogonal_offer_directions(state.cone, state.batch, excluded or [], grad, n)
    if candidates is None:
        return None
    for direction in candidates:
        t = min(feasible_scale(S_A, S_B, direction, limits), offer_norm)
        if t >= _FEASIBLE_FLOOR_FRACTION * offer_norm:
            return t * direction
    return None


def predicted_certain_reject(state: RefinementState, delta: np.ndarray) -> bool:
    """True when some recorded counteroffer constraint makes acceptance of
    ``delta`` impossible for every gradient still inside the cone."""
    if state.cone is None or not state.extra_constraints:
        return False
    for h in state.extra_constraints:
        wedge_angle = min_angle_to_wedge(state.cone.direction, h.normal, -delta)
        if wedge_angle > state.cone.angle + _TOL:
            return True
    return False


class ConeTradingEngine(TradingEngine):
    """Offer engine implementing the two-stage cone-refinement loop."""

    name = "stcr"

    def __init__(self, S_A, S_B, f_A, params: NegotiationParams, discrete: bool = False):
        super().__init__(S_A, S_B, f_A, params, discrete=discrete)
        self.state = RefinementState()
        self._quadrant_index = 0
        self._pending_axis: int | None = None
        self._excluded: list[np.ndarray] = []
        self._cr_runs = 0
        self._run_open = False
        self._last_offer_run: int | None = None

    # -- coordinate helpers: refinement lives in the active subspace; offers
    # are lifted back to the full dimension before emission -----------------

    def _reduced(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float)[self.active]

    def _lift(self, v_red: np.ndarray) -> np.ndarray:
        full = np.zeros(self.S_A.shape[0])
        full[self.active] = v_red
        return full

    def _grad_red(self) -> np.ndarray:
        return self._reduced(self.f_A.gradient(self.S_A))

    def _floor(self) -> float:
        return self.params.offer_norm * self.params.halving_floor_fraction

    def _initial_angle(self, quadrant: np.ndarray) -> float:
        # The quadrant stage pins only the halfspace around Q, hence pi/2.
        return math.pi / 2

    def _reset_run(self, keep_cone: bool) -> None:
        if not keep_cone:
            self.state.cone = None
        self.state.batch = []
        self.state.quadrant = None
        self.state.extra_constraints = []
        self._quadrant_index = 0
        self._pending_axis = None
        self._excluded = []
        self._run_open = False

    # -- response hooks -------------------------------------------------------

    def _on_accept(self, delta: np.ndarray, stage: str) -> None:
        keep = False
        if self.params.use_cone_warm_start and self.state.cone is not None:
            warmed = warm_start_cone(self.state.cone, delta, self.params.cone_expansion_rate)
            if warmed is not None:
                self.state.cone = warmed
                keep = True
        self._reset_run(keep_cone=keep)

    def _on_reject(self, delta: np.ndarray, stage: str) -> None:
        delta_red = self._reduced(delta)
        if stage == "quadrant" and self._pending_axis is not None:
            self.state.quadrant[self._pending_axis] += delta_red[self._pending_axis]
            self._quadrant_index = self._pending_axis + 1
            self._pending_axis = None
        elif stage in ("refine", "bisect"):
            self.state.batch.append(delta_red)
        elif stage == "counter-echo":
            # An arbitrary-direction cut cannot join the orthogonal batch but
            # still constrains the responder's gradient.
            self.state.extra_constraints.append(Halfspace(delta_red, 0.0))

    def _on_counter(self, counter: np.ndarray) -> None:
        incorporate_counteroffer(self.state, self._reduced(counter))

    def _on_active_change(self) -> None:
        # Cuts and cones live in the old subspace; start over in the new one.
        self.state = RefinementState()
        self._reset_run(keep_cone=False)

    def _cone_snapshot(self):
        if self.state.cone is None:
            return None
        return self._lift(self.state.cone.direction).tolist(), float(self.state.cone.angle)

    def _cr_run(self) -> int | None:
        run, self._last_offer_run = self._last_offer_run, None
        return run

    def _stage1_candidate(self) -> np.ndarray | None:
        T = self.prev_trade
        if T is None:
            return None
        if not is_feasible(self.S_A, self.S_B, T, self.limits):
            return None
        if float(np.dot(T, self.f_A.gradient(self.S_A))) < -_TOL:
            return None
        return ensure_beneficial(T, self.f_A, self.S_A, self._floor(), discrete=self.discrete)

    # -- offer generation -----------------------------------------------------

    def _algorithm_offer(self):
        if not self._run_open:
            self._run_open = True
            self._cr_runs += 1
            self.state.offers_made = 0
        for _ in range(4 * len(self.active) + 8):
            if self.state.cone is None:
                probe = self._quadrant_offer()
                if probe is not None:
                    return probe
                if self.state.cone is None:
                    return None  # terminal reason already set
                continue
            n_red = len(self.active)
            if len(self.state.batch) >= n_red - 1:
                self.state.cone = refine_cone(self.state.cone, self.state.batch)
                self.state.batch = []
            if self.state.cone.angle < self.params.angle_threshold:
                self.terminal_reason = ANGLE_THRESHOLD
                return None
            offer = self._refinement_offer()
            if offer is None:
                if self.terminal_reason is None:
                    self.terminal_reason = NO_FEASIBLE_OFFER
                return None
            return offer
        self.terminal_reason = NO_FEASIBLE_OFFER
        return None

    def _quadrant_offer(self):
        """Next axis probe; builds the quadrant cone once all axes resolved."""
        n_red = len(self.active)
        if self.state.quadrant is None:
            self.state.quadrant = np.zeros(n_red)
            self._quadrant_index = 0
        grad = self._grad_red()
        S_A_red, S_B_red = self._reduced(self.S_A), self._reduced(self.S_B)
        min_magnitude = 1.0 if self.discrete else _FEASIBLE_FLOOR_FRACTION * self.params.offer_norm
        while self._quadrant_index < n_red:
            i = self._quadrant_index
            sign = -1.0 if grad[i] < 0 else 1.0  # zero gradient ties break to +
            direction = np.zeros(n_red)
            direction[i] = sign
            t = feasible_scale(S_A_red, S_B_red, direction, self.limits)
            if self.discrete:
                t = math.floor(t + _TOL)
            if t >= min_magnitude:
                full = self._lift(t * direction)
                adjusted = ensure_beneficial(full, self.f_A, self.S_A, self._floor(), self.discrete)
                if adjusted is not None:
                    self._pending_axis = i
                    self.state.offers_made += 1
                    self._last_offer_run = self._cr_runs
                    return adjusted, "quadrant"
            # Axis unusable: no offer was made, so no information on it.
            self._quadrant_index += 1
        if float(np.linalg.norm(self.state.quadrant)) <= _TOL:
            self.terminal_reason = NO_FEASIBLE_OFFER
            return None
        self.state.cone = GradientCone.from_direction(
            self.state.quadrant, self._initial_angle(self.state.quadrant)
        )
        return None

    def _refinement_offer(self):
        n_red = len(self.active)
        grad = self._grad_red()
        S_A_red, S_B_red = self._reduced(self.S_A), self._reduced(self.S_B)
        for _ in range(n_red + 2):
            candidates = orthogonal_offer_directions(
                self.state.cone, self.state.batch, self._excluded, grad, n_red
            )
            if candidates is None:
                return None
            excluded_this_round = False
            for direction in candidates:
                direction = self._filter_against_constraints(direction, grad)
                t = min(feasible_scale(S_A_red, S_B_red, direction, self.limits), self.params.offer_norm)
                if t < _FEASIBLE_FLOOR_FRACTION * self.params.offer_norm:
                    continue
                shaped = self._shape_refinement_offer(t * direction, grad)
                if shaped is None:
                    continue
                adjusted = ensure_beneficial(
                    self._lift(shaped), self.f_A, self.S_A, self._floor(), self.discrete
                )
                if adjusted is None:
                    self._excluded.append(direction)
                    excluded_this_round = True
                    break
                self.state.offers_made += 1
                self._last_offer_run = self._cr_runs
                return adjusted, "refine"
            if not excluded_this_round:
                return None
        return None

    def _shape_refinement_offer(self, delta_red: np.ndarray, grad_red: np.ndarray) -> np.ndarray | None:
        return delta_red  # the discrete subclass rounds to integers here

    def _filter_against_constraints(self, direction: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Mirror a candidate that every belief says would be rejected, when the
        mirror costs the offering agent nothing."""
        if not predicted_certain_reject(self.state, direction):
            return direction
        if float(np.dot(grad, -direction)) >= -_TOL and not predicted_certain_reject(self.state, -direction):
            return -direction
        return direction


def run_negotiation(
    S_A,
    S_B,
    f_A: QuadraticUtility,
    responder: Responder,
    params: NegotiationParams,
    f_B: QuadraticUtility | None = None,
) -> NegotiationTranscript:
    """Run a full continuous-mode negotiation against a responder oracle."""
    engine = ConeTradingEngine(S_A, S_B, f_A, params, discrete=False)
    return drive(engine, responder, f_B=f_B)
