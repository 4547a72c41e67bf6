"""Integer-constrained cone refinement.

Integer offers make halfspace cuts off-center and non-orthogonal, so the
space of candidate gradients is tracked explicitly as a polytope in the
hyperplane normal to the cone direction, one unit along it. The polytope is
the cone's bounding hypercube cut by one halfspace per rejected offer. Each
step either encloses the polytope in a smaller cone (via a sphere through the
two farthest corners, radius scaled by sqrt(3)) or emits an integer offer
whose cut bisects those corners.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .engine import NO_FEASIBLE_OFFER, NegotiationParams, NegotiationTranscript, Responder, drive
from .geometry import (
    GeometryError,
    GradientCone,
    Halfspace,
    as_vector,
    orthonormal_extension,
    rotate_towards,
    unit,
)
from .refine import ConeTradingEngine, ensure_beneficial
from .trading import OfferLimits, QuadraticUtility

_TOL = 1e-9
_CORNER_FEAS_TOL = 1e-8
_CORNER_DEDUPE_TOL = 1e-7
# Cone angles at (or numerically near) pi/2 have no bounded hypercube; the
# quadrant stage owns that regime.
_THETA_SUPPORTED = math.pi / 2 - 1e-9
_EXPANSION_FACTOR = 1.1
_RESCALE_ATTEMPTS = 3


@dataclass(frozen=True, eq=False)
class HyperplaneChart:
    """Orthonormal coordinates on the hyperplane normal to ``tau`` at unit
    distance from the cone vertex. ``basis`` has the n-1 chart directions as
    columns."""

    tau: np.ndarray
    basis: np.ndarray  # n x (n-1)

    def __post_init__(self):
        tau = unit(self.tau)
        M = np.asarray(self.basis, dtype=float)
        if M.shape != (tau.shape[0], tau.shape[0] - 1):
            raise GeometryError("chart basis must be n x (n-1)")
        if float(np.max(np.abs(M.T @ tau), initial=0.0)) > _TOL:
            raise GeometryError("chart basis not orthogonal to tau")
        gram = M.T @ M - np.eye(M.shape[1])
        if float(np.max(np.abs(gram), initial=0.0)) > _TOL:
            raise GeometryError("chart basis not orthonormal")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "basis", M)

    @classmethod
    def from_direction(cls, tau) -> "HyperplaneChart":
        tau = unit(tau)
        columns = orthonormal_extension([tau], tau.shape[0])
        return cls(tau, np.column_stack(columns) if columns else np.zeros((tau.shape[0], 0)))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def lift(self, x) -> np.ndarray:
        """Chart point -> full-space point tau + M x."""
        return self.tau + self.basis @ as_vector(x, self.dim)

    def project(self, v) -> np.ndarray:
        """Full-space vector -> chart coordinates M^T v."""
        return self.basis.T @ as_vector(v, self.tau.shape[0])


@dataclass(frozen=True, eq=False)
class GradientPolytope:
    """Hypercube of the current cone cut by rejected-offer halfspaces, all in
    chart coordinates."""

    chart: HyperplaneChart
    cube_halfspaces: tuple[Halfspace, ...]
    offer_halfspaces: tuple[Halfspace, ...]

    def constraint_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        rows = [h.normal for h in self.cube_halfspaces + self.offer_halfspaces]
        offs = [h.offset for h in self.cube_halfspaces + self.offer_halfspaces]
        return np.asarray(rows, dtype=float), np.asarray(offs, dtype=float)


@dataclass(frozen=True)
class EnclosingSphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center))
        if self.radius < 0:
            raise GeometryError("sphere radius must be nonnegative")

    def verify_encloses(self, points, tol: float = 1e-9) -> None:
        for p in points:
            if float(np.linalg.norm(as_vector(p, self.center.shape[0]) - self.center)) > self.radius + tol:
                raise GeometryError("enclosing sphere misses a polytope corner")


def build_polytope(theta: float, rejected, chart: HyperplaneChart, extra=()) -> GradientPolytope:
    """Trace the cone and the rejected-offer cuts onto the chart.

    The cone becomes the hypercube |x_i| <= tan(theta). A rejected offer T
    keeps the gradients with <T, x_full> >= 0; at x_full = tau + M x that is
    g^T x >= -<T, tau> with g = M^T T (the offset equals -||T|| cos(angle(T,
    tau))). Counteroffer halfspaces trace the same way.
    """
    if not (0.0 < theta < _THETA_SUPPORTED):
        raise GeometryError("polytope chart requires theta in (0, pi/2)")
    bound = math.tan(theta)
    dim = chart.dim
    cube = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        cube.append(Halfspace(e.copy(), -bound))
        cube.append(Halfspace(-e, -bound))
    cuts = []
    pairs = [(as_vector(t, chart.tau.shape[0]), 0.0) for t in rejected]
    pairs += [(as_vector(h.normal, chart.tau.shape[0]), h.offset) for h in extra]
    for normal, offset in pairs:
        g = chart.project(normal)
        if float(np.linalg.norm(g)) <= _TOL:
            continue  # cut parallel to the chart carries no trace
        cuts.append(Halfspace(g, offset - float(np.dot(normal, chart.tau))))
    return GradientPolytope(chart, tuple(cube), tuple(cuts))


def polytope_corners(P: GradientPolytope) -> list[np.ndarray]:
    """All vertices of the constraint intersection by equality-subset solving.

    Practical because the chart dimension stays <= ~6 and the constraint
    count small. An empty list signals an empty polytope.
    """
    A, b = P.constraint_matrix()
    m, dim = A.shape
    combos = list(itertools.combinations(range(m), dim))
    if not combos:
        return []
    idx = np.asarray(combos)
    mats = A[idx]  # (k, dim, dim)
    rhs = b[idx]
    dets = np.abs(np.linalg.det(mats))
    solvable = dets > 1e-12
    if not np.any(solvable):
        return []
    points = np.linalg.solve(mats[solvable], rhs[solvable][..., None])[..., 0]
    feasible = np.all(points @ A.T >= b - _CORNER_FEAS_TOL, axis=1)
    points = points[feasible]
    corners: list[np.ndarray] = []
    for p in sorted(map(tuple, points)):
        arr = np.asarray(p)
        if all(float(np.linalg.norm(arr - c)) > _CORNER_DEDUPE_TOL for c in corners):
            corners.append(arr)
    return corners


def farthest_pair(corners) -> tuple[np.ndarray, np.ndarray]:
    """The corner pair at maximal distance; ties break lexicographically."""
    pts = [as_vector(c) for c in corners]
    if len(pts) < 2:
        raise GeometryError("farthest pair needs at least two corners")
    best_d2 = -1.0
    best_key = None
    best_pair = None
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            d2 = float(np.dot(pts[i] - pts[j], pts[i] - pts[j]))
            hi, lo = sorted((tuple(pts[i]), tuple(pts[j])), reverse=True)
            key = (hi, lo)
            if d2 > best_d2 + 1e-12 or (abs(d2 - best_d2) <= 1e-12 and key < best_key):
                best_d2, best_key, best_pair = d2, key, (np.asarray(hi), np.asarray(lo))
    return best_pair


def enclosing_sphere(x1, x2) -> EnclosingSphere:
    """Sphere centered between the farthest corners, radius sqrt(3)/2 times
    their distance. Any point farther from the center would itself be part of
    a farther pair (law of cosines), so all corners are enclosed."""
    x1 = as_vector(x1)
    x2 = as_vector(x2, x1.shape[0])
    return EnclosingSphere((x1 + x2) / 2.0, math.sqrt(3.0) / 2.0 * float(np.linalg.norm(x1 - x2)))


def sphere_enclosure_angle(dim: int, s: float, r: float) -> float:
    """Exact half-angle of the cone through tau + M c enclosing the lifted
    chart ball of radius r at distance s from the chart origin.

    For dim >= 2 the extreme direction is the ball's tangent circle when
    r < s (angle asin(r / sqrt(1 + s^2))) and the near boundary point
    otherwise. A 1-D chart has only the two boundary points.
    """
    if r <= 0.0:
        return 0.0
    if dim <= 1 or r >= s:
        return math.atan(s) + math.atan(r - s)
    return math.asin(r / math.sqrt(1.0 + s * s))


def sphere_to_cone(sphere: EnclosingSphere, chart: HyperplaneChart) -> GradientCone | None:
    """Smallest cone along the lifted sphere center enclosing the lifted sphere.

    Returns None when the enclosure would reach a hemisphere or more; the
    caller keeps refining (or expands) in that case.
    """
    c = sphere.center
    r = sphere.radius
    s = float(np.linalg.norm(c))
    if s <= _TOL:
        direction = chart.tau
    else:
        direction = rotate_towards(chart.tau, chart.basis @ (c / s), math.atan(s))
    theta = sphere_enclosure_angle(chart.dim, s, r)
    if theta >= math.pi / 2 - 1e-12:
        return None
    return GradientCone(unit(direction), max(theta, 1e-12))


@lru_cache(maxsize=16)
def _integer_box(n: int, cap: int) -> np.ndarray:
    axis = range(-cap, cap + 1)
    return np.asarray(list(itertools.product(axis, repeat=n)), dtype=float)


def _integer_candidates(target: np.ndarray, cap: int) -> np.ndarray:
    n = target.shape[0]
    if n <= 4:
        return _integer_box(n, cap)
    # Larger dimensions: nearest-integer seed with a +-1 neighborhood.
    center = np.clip(np.round(target), -cap, cap)
    offsets = np.asarray(list(itertools.product((-1.0, 0.0, 1.0), repeat=n)))
    return np.unique(np.clip(center + offsets, -cap, cap), axis=0)


def round_to_integer_offer(
    target,
    S_A,
    S_B,
    limits: OfferLimits,
    d_bound: float | None = None,
    grad=None,
) -> np.ndarray | None:
    """Nonzero feasible integer vector closest in angle to ``target``.

    Candidates live in the per-category cap box with norm at most ``d_bound``
    (the norm cap by default); when a gradient is supplied only candidates
    with a nonnegative inner product qualify.
    """
    target = as_vector(target)
    S_A = as_vector(S_A, target.shape[0])
    S_B = as_vector(S_B, target.shape[0])
    bound = limits.norm_cap if d_bound is None else d_bound
    cap = int(math.floor(min(limits.per_category_cap or limits.norm_cap, limits.norm_cap) + _TOL))
    if cap < 1:
        return None
    cands = _integer_candidates(target, cap)
    norms = np.linalg.norm(cands, axis=1)
    mask = (norms > 0.5) & (norms <= bound + _TOL)
    mask &= np.all(S_A + cands >= -_TOL, axis=1) & np.all(S_B - cands >= -_TOL, axis=1)
    if grad is not None:
        mask &= cands @ as_vector(grad, target.shape[0]) >= -_TOL
    if not np.any(mask):
        return None
    cands = cands[mask]
    cosines = (cands @ target) / (np.linalg.norm(cands, axis=1) * max(float(np.linalg.norm(target)), _TOL))
    return cands[int(np.argmax(cosines))].copy()


def _cut_sides(delta: np.ndarray, chart: HyperplaneChart, x1: np.ndarray, x2: np.ndarray) -> tuple[float, float]:
    g = chart.project(delta)
    off = -float(np.dot(delta, chart.tau))
    return float(np.dot(g, x1)) - off, float(np.dot(g, x2)) - off


def _separates(delta: np.ndarray, chart: HyperplaneChart, x1: np.ndarray, x2: np.ndarray) -> bool:
    s1, s2 = _cut_sides(delta, chart, x1, x2)
    return (s1 > _TOL and s2 < -_TOL) or (s1 < -_TOL and s2 > _TOL)


def bisecting_offer(
    x1,
    x2,
    chart: HyperplaneChart,
    d: float,
    limits: OfferLimits,
    S_A,
    S_B,
    grad=None,
) -> np.ndarray | None:
    """Integer offer whose rejection cut bisects the two farthest corners.

    The chart hyperplane a^T x = b midway between x1 and x2 lifts to the
    offer direction M a tilted towards -sign(b) tau by atan(|b|): rejecting
    that offer keeps exactly the a^T x >= b side. Rounding to integers can
    spoil the cut, so the magnitude is doubled (feasibility permitting) until
    the rounded cut strictly separates the corners; with no separating
    integer offer at all, trading stops.
    """
    x1 = as_vector(x1)
    x2 = as_vector(x2, x1.shape[0])
    diff = x1 - x2
    dist = float(np.linalg.norm(diff))
    if dist <= _TOL:
        raise GeometryError("bisecting offer requires distinct corners")
    a = diff / dist
    b = (float(np.dot(x1, x1)) - float(np.dot(x2, x2))) / (2.0 * dist)
    axis = chart.basis @ a
    if abs(b) <= _TOL:
        t_real = axis
    else:
        t_real = rotate_towards(axis, -math.copysign(1.0, b) * chart.tau, math.atan(abs(b)))
    if grad is not None and float(np.dot(t_real, as_vector(grad, t_real.shape[0]))) < 0.0:
        t_real = -t_real  # negation keeps the same cut boundary
    scale = d
    for _ in range(_RESCALE_ATTEMPTS):
        cand = round_to_integer_offer(t_real * scale, S_A, S_B, limits, d_bound=scale, grad=grad)
        if cand is not None and _separates(cand, chart, x1, x2):
            return cand
        scale *= 2.0
    # Last resort within the original caps: any separating feasible integer
    # offer, closest in angle to the ideal one.
    cap = int(math.floor(min(limits.per_category_cap or limits.norm_cap, limits.norm_cap) + _TOL))
    if cap < 1:
        return None
    cands = _integer_candidates(t_real * d, cap)
    norms = np.linalg.norm(cands, axis=1)
    mask = norms > 0.5
    mask &= np.all(as_vector(S_A) + cands >= -_TOL, axis=1) & np.all(as_vector(S_B) - cands >= -_TOL, axis=1)
    if grad is not None:
        mask &= cands @ as_vector(grad, t_real.shape[0]) >= -_TOL
    G = cands @ chart.basis
    offs = -(cands @ chart.tau)
    s1 = G @ x1 - offs
    s2 = G @ x2 - offs
    mask &= ((s1 > _TOL) & (s2 < -_TOL)) | ((s1 < -_TOL) & (s2 > _TOL))
    if not np.any(mask):
        return None
    cands = cands[mask]
    cosines = (cands @ t_real) / np.linalg.norm(cands, axis=1)
    return cands[int(np.argmax(cosines))].copy()


class DiscreteConeEngine(ConeTradingEngine):
    """Cone-refinement engine for integer offers with polytope bookkeeping."""

    def __init__(self, S_A, S_B, f_A, params: NegotiationParams):
        super().__init__(S_A, S_B, f_A, params, discrete=True)

    def _initial_angle(self, quadrant: np.ndarray) -> float:
        # Tightest cone around the quadrant's signed orthant: the worst axis
        # is the one with the smallest |Q_i| share. Unprobed axes force pi/2,
        # which the polytope chart cannot represent, so cap below it.
        ratios = np.abs(quadrant) / float(np.linalg.norm(quadrant))
        theta = math.acos(float(np.clip(np.min(ratios), -1.0, 1.0)))
        return min(theta, 1.5)

    def _shape_refinement_offer(self, delta_red: np.ndarray, grad_red: np.ndarray) -> np.ndarray | None:
        return round_to_integer_offer(
            delta_red,
            self._reduced(self.S_A),
            self._reduced(self.S_B),
            self.limits,
            d_bound=self.params.offer_norm,
            grad=grad_red,
        )

    def _algorithm_offer(self):
        from .engine import ANGLE_THRESHOLD

        if not self._run_open:
            self._run_open = True
            self._cr_runs += 1
            self.state.offers_made = 0
        for _ in range(6 * len(self.active) + 16):
            if self.state.cone is None:
                probe = self._quadrant_offer()
                if probe is not None:
                    return probe
                if self.state.cone is None:
                    return None
                continue
            if self.state.cone.angle < self.params.angle_threshold:
                self.terminal_reason = ANGLE_THRESHOLD
                return None
            n_red = len(self.active)
            if len(self.state.batch) < n_red - 1:
                offer = self._refinement_offer()
                if offer is None and self.terminal_reason is None:
                    self.terminal_reason = NO_FEASIBLE_OFFER
                return offer
            outcome = self._polytope_step()
            if outcome is None:
                if self.terminal_reason is None:
                    self.terminal_reason = NO_FEASIBLE_OFFER
                return None
            if isinstance(outcome, str):
                continue  # adopted / expanded / reinitialized; recompute
            return outcome
        self.terminal_reason = NO_FEASIBLE_OFFER
        return None

    def _adopt(self, cone: GradientCone) -> None:
        self.state.cone = cone
        self.state.batch = []
        self.state.extra_constraints = []

    def _polytope_step(self):
        """One polytope evaluation: adopt a smaller cone, expand an empty one,
        reinitialize past the quadrant regime, or emit a bisecting offer."""
        theta = self.state.cone.angle
        if theta >= _THETA_SUPPORTED:
            self._reset_run(keep_cone=False)
            self._run_open = True
            return "reinit"
        chart = HyperplaneChart.from_direction(self.state.cone.direction)
        while True:
            polytope = build_polytope(theta, self.state.batch, chart, self.state.extra_constraints)
            corners = polytope_corners(polytope)
            if corners:
                break
            theta *= _EXPANSION_FACTOR
            if theta >= math.pi / 2:
                # Contradictory cuts beyond repair: rerun the quadrant stage.
                self._reset_run(keep_cone=False)
                self._run_open = True
                self._pending_tags.append("polytope-reinit")
                return "reinit"
            self.state.cone = GradientCone(self.state.cone.direction, theta)
            self._pending_tags.append("cone-expanded")
        if len(corners) == 1:
            # The gradient direction is pinned; collapse the cone onto it.
            self._adopt(GradientCone(unit(chart.lift(corners[0])), 1e-12))
            self._pending_extra.update({"polytope_corners": 1, "cone_adopted": True})
            return "adopted"
        x1, x2 = farthest_pair(corners)
        sphere = enclosing_sphere(x1, x2)
        sphere.verify_encloses(corners)
        candidate = sphere_to_cone(sphere, chart)
        info = {
            "polytope_corners": len(corners),
            "sphere_radius": float(sphere.radius),
            "cone_adopted": bool(candidate is not None and candidate.angle <= theta),
        }
        self._pending_extra.update(info)
        if candidate is not None and candidate.angle <= theta:
            self._adopt(candidate)
            return "adopted"
        grad = self._grad_red()
        offer = bisecting_offer(
            x1,
            x2,
            chart,
            self.params.offer_norm,
            self.limits,
            self._reduced(self.S_A),
            self._reduced(self.S_B),
            grad=grad,
        )
        if offer is None:
            return None  # no integer offer can refine the cone: stop trading
        adjusted = ensure_beneficial(self._lift(offer), self.f_A, self.S_A, self._floor(), discrete=True)
        if adjusted is None:
            return None
        self.state.offers_made += 1
        self._last_offer_run = self._cr_runs
        return adjusted, "bisect"


def run_discrete_negotiation(
    S_A,
    S_B,
    f_A: QuadraticUtility,
    responder: Responder,
    params: NegotiationParams,
    f_B: QuadraticUtility | None = None,
) -> NegotiationTranscript:
    """Run a full integer-mode negotiation against a responder oracle."""
    engine = DiscreteConeEngine(S_A, S_B, f_A, params)
    return drive(engine, responder, f_B=f_B)
