"""Sequential resource trading via comparison-based gradient-cone refinement."""

from .engine import (
    ACCEPT,
    CounterOffer,
    NegotiationParams,
    NegotiationTranscript,
    REJECT,
    drive,
    greedy_responder,
)
from .geometry import GradientCone, Halfspace, angle_between, cone_contains
from .refine import ConeTradingEngine, RefinementState, run_negotiation
from .discrete import DiscreteConeEngine, run_discrete_negotiation
from .trading import (
    BenefitRecord,
    OfferLimits,
    QuadraticUtility,
    TradeOffer,
    active_categories,
    apply_trade,
    benefit,
    is_feasible,
    respond,
)
from .theory import TheoryParams, angle_bound, epsilon_bounds, pareto_certify, solve_kappa

__all__ = [
    "ACCEPT",
    "REJECT",
    "BenefitRecord",
    "ConeTradingEngine",
    "CounterOffer",
    "DiscreteConeEngine",
    "GradientCone",
    "Halfspace",
    "NegotiationParams",
    "NegotiationTranscript",
    "OfferLimits",
    "QuadraticUtility",
    "RefinementState",
    "TheoryParams",
    "TradeOffer",
    "active_categories",
    "angle_between",
    "angle_bound",
    "apply_trade",
    "benefit",
    "cone_contains",
    "drive",
    "epsilon_bounds",
    "greedy_responder",
    "is_feasible",
    "pareto_certify",
    "respond",
    "run_discrete_negotiation",
    "run_negotiation",
    "solve_kappa",
]
