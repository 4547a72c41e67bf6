"""Problem model for bilateral multi-issue trading.

States are nonnegative per-category resource vectors. A trade offer is the
signed change vector from the offering agent's perspective (positive entries
are resources the offering agent receives). Both agents are greedily
rational: the responder accepts exactly the offers with nonnegative benefit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import as_vector

ACCEPT = "accept"
REJECT = "reject"

# Responses with zero benefit are accepted ("benefit >= 0"); this tolerance
# only absorbs float noise around the tie, which is measure-zero for random
# scenarios anyway.
_FEAS_TOL = 1e-9


class TradingError(ValueError):
    pass


class InfeasibleTradeError(TradingError):
    """A trade would leave an agent with negative resources."""


def as_state(s) -> np.ndarray:
    arr = as_vector(s)
    if np.any(arr < -_FEAS_TOL):
        raise TradingError("agent state has negative resources")
    return np.maximum(arr, 0.0)


@dataclass(frozen=True, eq=False)
class TradeOffer:
    """Signed per-category change vector; positive = offering agent's gain."""

    delta: np.ndarray
    discrete: bool = False

    def __post_init__(self):
        d = as_vector(self.delta)
        if self.discrete and not np.allclose(d, np.round(d), atol=1e-9):
            raise TradingError("discrete offer has non-integer components")
        object.__setattr__(self, "delta", d)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.delta))


@dataclass(frozen=True, eq=False)
class OfferLimits:
    """Magnitude caps on a single offer: Euclidean norm and per-category size."""

    norm_cap: float
    per_category_cap: float | None = None

    def __post_init__(self):
        if self.norm_cap <= 0:
            raise TradingError("norm_cap must be positive")
        if self.per_category_cap is not None and self.per_category_cap <= 0:
            raise TradingError("per_category_cap must be positive")


@dataclass(eq=False)
class QuadraticUtility:
    """f(S) = S^T Q S + 2 S^T u with Q negative semi-definite.

    Q is symmetrized on construction; user-supplied matrices are accepted as
    long as their symmetric part is NSD (within 1e-9). Linear utilities are
    the Q = 0 special case.
    """

    Q: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        u = as_vector(self.u)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] != u.shape[0]:
            raise TradingError("Q must be n x n and match u")
        Q = (Q + Q.T) / 2.0
        if Q.shape[0] and float(np.max(np.linalg.eigvalsh(Q))) > 1e-9:
            raise TradingError("Q must be negative semi-definite")
        self.Q = Q
        self.u = u

    @classmethod
    def linear(cls, u) -> "QuadraticUtility":
        u = as_vector(u)
        return cls(np.zeros((u.shape[0], u.shape[0])), u)

    @classmethod
    def target(cls, b) -> "QuadraticUtility":
        """-S^T I S + 2 S^T b, maximized at the target allocation b."""
        b = as_vector(b)
        return cls(-np.eye(b.shape[0]), b)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def evaluate(self, S) -> float:
        S = as_vector(S, self.n)
        return float(S @ self.Q @ S + 2.0 * S @ self.u)

    def gradient(self, S) -> np.ndarray:
        S = as_vector(S, self.n)
        return 2.0 * (self.Q @ S + self.u)

    def to_json(self) -> dict:
        return {"n": self.n, "Q": self.Q.flatten().tolist(), "u": self.u.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "QuadraticUtility":
        n = int(obj["n"])
        return cls(np.asarray(obj["Q"], dtype=float).reshape(n, n), obj["u"])


def utility_eval(f: QuadraticUtility, S) -> float:
    return f.evaluate(S)


def utility_gradient(f: QuadraticUtility, S) -> np.ndarray:
    return f.gradient(S)


def benefit(f: QuadraticUtility, S, delta, side: str) -> float:
    """Utility change of one side of the trade ``delta``.

    The offering agent moves to S + delta, the responding agent to S - delta.
    """
    S = as_vector(S)
    d = as_vector(delta, S.shape[0])
    if side == "offering":
        post = S + d
    elif side == "responding":
        post = S - d
    else:
        raise TradingError(f"unknown side {side!r}")
    if np.any(post < -_FEAS_TOL):
        raise InfeasibleTradeError("post-trade state has negative resources")
    return f.evaluate(post) - f.evaluate(S)


def respond(f_B: QuadraticUtility, S_B, delta) -> str:
    """Greedy responder: accept iff the responding benefit is >= 0.

    Infeasible offers are rejected rather than raising; the offering side is
    supposed to filter them, this just keeps the oracle total.
    """
    try:
        b = benefit(f_B, S_B, delta, "responding")
    except InfeasibleTradeError:
        return REJECT
    return ACCEPT if b >= 0.0 else REJECT


def is_feasible(S_A, S_B, delta, limits: OfferLimits) -> bool:
    """Both post-trade states nonnegative and the offer within the caps."""
    S_A = as_vector(S_A)
    S_B = as_vector(S_B, S_A.shape[0])
    d = as_vector(delta, S_A.shape[0])
    if np.any(S_A + d < -_FEAS_TOL) or np.any(S_B - d < -_FEAS_TOL):
        return False
    if float(np.linalg.norm(d)) > limits.norm_cap + _FEAS_TOL:
        return False
    if limits.per_category_cap is not None and float(np.max(np.abs(d), initial=0.0)) > limits.per_category_cap + _FEAS_TOL:
        return False
    return True


def apply_trade(S_A, S_B, delta) -> tuple[np.ndarray, np.ndarray]:
    """Transition both states; per-category totals are conserved."""
    S_A = as_vector(S_A)
    S_B = as_vector(S_B, S_A.shape[0])
    d = as_vector(delta, S_A.shape[0])
    new_A = S_A + d
    new_B = S_B - d
    if np.any(new_A < -_FEAS_TOL) or np.any(new_B < -_FEAS_TOL):
        raise InfeasibleTradeError("trade would drive a state negative")
    return np.maximum(new_A, 0.0), np.maximum(new_B, 0.0)


def active_categories(S_A, S_B, tol: float = _FEAS_TOL) -> list[int]:
    """Categories where neither agent holds the entire stock."""
    S_A = as_vector(S_A)
    S_B = as_vector(S_B, S_A.shape[0])
    return [i for i in range(S_A.shape[0]) if S_A[i] > tol and S_B[i] > tol]


def feasible_scale(S_A, S_B, direction, limits: OfferLimits) -> float:
    """Largest magnitude t such that t * (direction / ||direction||) is feasible."""
    S_A = as_vector(S_A)
    S_B = as_vector(S_B, S_A.shape[0])
    v = as_vector(direction, S_A.shape[0])
    norm = float(np.linalg.norm(v))
    if norm <= _FEAS_TOL:
        return 0.0
    v = v / norm
    t = limits.norm_cap
    for i in range(v.shape[0]):
        if v[i] > _FEAS_TOL:
            t = min(t, S_B[i] / v[i])  # responder gives category i
            if limits.per_category_cap is not None:
                t = min(t, limits.per_category_cap / v[i])
        elif v[i] < -_FEAS_TOL:
            t = min(t, S_A[i] / -v[i])  # offering agent gives category i
            if limits.per_category_cap is not None:
                t = min(t, limits.per_category_cap / -v[i])
    return max(t, 0.0)


@dataclass(frozen=True)
class BenefitRecord:
    """Both sides' utility changes for one trade; societal is their sum."""

    offering_benefit: float
    responding_benefit: float
    societal_benefit: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        total = self.offering_benefit + self.responding_benefit
        if self.societal_benefit is None:
            object.__setattr__(self, "societal_benefit", total)
        elif abs(self.societal_benefit - total) > 1e-9:
            raise TradingError("societal benefit must equal the sum of the sides")
