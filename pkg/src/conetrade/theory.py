"""Executable optimality certificates for rejection streaks.

After k consecutive rejected offers from the refinement procedure, either the
agents' gradients are within a computable angle of each other, or the
responder's gradient norm is bounded. Both bounds translate into an epsilon
for epsilon-weak Pareto optimality of the terminal state. A brute-force grid
oracle certifies terminal states independently of the algorithm under test.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import math

import numpy as np

from .trading import OfferLimits, QuadraticUtility, benefit, is_feasible


class CertificateError(ValueError):
    pass


def shrink_factor(n: int) -> float:
    """Per-refinement sine shrink factor sqrt(1 - 1/(2n))."""
    return math.sqrt(1.0 - 1.0 / (2 * n))


def _exponent(n: int, k: int) -> int:
    # floor((k - n)/(n - 1)): completed refinement batches after the n
    # quadrant probes.
    return (k - n) // (n - 1)


def angle_bound(n: int, k: int) -> float:
    """Upper bound on the angle between the agents' gradients after k rejects."""
    if n < 2:
        raise CertificateError("need n >= 2")
    if k < n:
        raise CertificateError("bound defined for k >= n")
    return 2.0 * math.asin(shrink_factor(n) ** _exponent(n, k))


def kappa_rhs(kappa: float, n: int, coefficient: float = 2.0) -> float:
    """Right-hand side of the balance equation; monotone decreasing in kappa.

    With r = (k^2 - (n-1)) / (k^2 + (n-1)), the value is coeff*n*sqrt(1-r^2).
    Expanding 1 - r^2 = 4 (n-1) k^2 / (k^2 + n - 1)^2 avoids the cancellation
    that rounds r to 1 for large kappa.
    """
    c = float(n - 1)
    return coefficient * n * 2.0 * kappa * math.sqrt(c) / (kappa * kappa + c)


def solve_kappa(n: int, k: int, tol: float = 1e-12, coefficient: float = 2.0) -> float:
    """Solve for kappa >= sqrt(n-1) balancing the shrink term against the rhs.

    The left side sqrt(1 - 1/(2n))^floor((k-n)/(n-1)) lies in (0, 1]; the
    right side decreases continuously from ``coefficient * n`` at
    kappa = sqrt(n-1) towards 0, so bisection always brackets a root.
    """
    if n < 2 or k < n:
        raise CertificateError("need n >= 2 and k >= n")
    lhs = shrink_factor(n) ** _exponent(n, k)
    lo = math.sqrt(n - 1.0)
    hi = max(2.0 * lo, 2.0)
    while kappa_rhs(hi, n, coefficient) > lhs:
        hi *= 2.0
        if hi > 1e300:
            raise CertificateError("failed to bracket kappa")
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if kappa_rhs(mid, n, coefficient) > lhs:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    kappa = 0.5 * (lo + hi)
    if abs(kappa_rhs(kappa, n, coefficient) - lhs) > max(tol, 1e-9):
        raise CertificateError("kappa residual above tolerance")
    return kappa


@dataclass(frozen=True)
class TheoryParams:
    """Inputs for the epsilon bounds of the terminal-state certificate."""

    n: int
    k: int
    d: float
    beta: float
    L: float
    delta: float
    kappa: float

    def __post_init__(self):
        if self.n < 2:
            raise CertificateError("need n >= 2")
        if self.kappa < math.sqrt(self.n - 1) - 1e-9:
            raise CertificateError("kappa below sqrt(n-1)")
        for name in ("d", "beta", "L", "delta"):
            if getattr(self, name) < 0:
                raise CertificateError(f"{name} must be nonnegative")


def epsilon_bounds(params: TheoryParams, case: int) -> float:
    """Epsilon for epsilon-weak Pareto optimality.

    Case 1 (aligned gradients): delta * L * sin(angle bound). The bound is
    vacuous at k = n, where the angle bound is pi and its sine collapses to
    zero, so case 1 requires k > n.
    Case 2 (near-optimal responder): d * kappa * sqrt(n) * beta * delta.
    """
    if case == 1:
        if params.k <= params.n:
            raise CertificateError("case-1 epsilon is undefined at k <= n")
        return params.delta * params.L * math.sin(angle_bound(params.n, params.k))
    if case == 2:
        return params.d * params.kappa * math.sqrt(params.n) * params.beta * params.delta
    raise CertificateError(f"unknown case {case}")


def gradient_norm_bound(n: int, k: int, d: float, beta: float) -> float:
    """Norm bound kappa * sqrt(n) * beta * d for the near-optimal condition."""
    return solve_kappa(n, max(k, n)) * math.sqrt(n) * beta * d


def smoothness_constant(f: QuadraticUtility, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """Smoothness constant of a quadratic utility: twice the spectral norm of Q.

    Computed by plain power iteration so tests can cross-check it against a
    dense eigensolver.
    """
    Q = f.Q
    n = Q.shape[0]
    if n == 0 or float(np.max(np.abs(Q))) == 0.0:
        return 0.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(max_iter):
        w = Q @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v_new = w / norm
        new_value = abs(float(v_new @ Q @ v_new))
        if abs(new_value - value) <= tol * max(1.0, new_value):
            value = new_value
            break
        value = new_value
        v = v_new
    return 2.0 * value


def pareto_certify(
    S_A,
    S_B,
    f_A: QuadraticUtility,
    f_B: QuadraticUtility,
    eps: float,
    limits: OfferLimits,
    grid_step: float = 1.0,
    max_points: int = 10_000_000,
) -> tuple[bool, np.ndarray | None]:
    """Exhaustively search the feasible trade grid for a joint improvement.

    Returns (True, None) when no feasible grid trade improves both agents by
    more than eps, else (False, witness). Grid coordinates are multiples of
    ``grid_step`` within the per-category cap (or the norm cap when no
    per-category cap is set).
    """
    S_A = np.asarray(S_A, dtype=float)
    S_B = np.asarray(S_B, dtype=float)
    n = S_A.shape[0]
    cap = limits.per_category_cap if limits.per_category_cap is not None else limits.norm_cap
    steps = int(math.floor(cap / grid_step + 1e-9))
    axis = [j * grid_step for j in range(-steps, steps + 1)]
    if len(axis) ** n > max_points:
        raise CertificateError(f"grid of {len(axis)**n} points exceeds {max_points}")
    for combo in itertools.product(axis, repeat=n):
        T = np.asarray(combo, dtype=float)
        if not np.any(T):
            continue
        if not is_feasible(S_A, S_B, T, limits):
            continue
        if benefit(f_A, S_A, T, "offering") > eps and benefit(f_B, S_B, T, "responding") > eps:
            return False, T
    return True, None
