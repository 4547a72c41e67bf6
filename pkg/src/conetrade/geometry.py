"""Small-dimension vector and cone geometry shared by the trading algorithms.

Everything here works on plain 1-D numpy float arrays. Dimensions stay small
(n <= ~10), so double precision with a fixed 1e-9 tolerance is enough.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Tolerance for unit-norm / orthogonality checks throughout the geometry layer.
TOL = 1e-9


class GeometryError(ValueError):
    """Raised for degenerate geometric inputs (zero vectors, dependent sets)."""


def as_vector(v, n: int | None = None) -> np.ndarray:
    """Coerce to a finite 1-D float array, optionally checking its length."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise GeometryError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("vector has non-finite components")
    if n is not None and arr.shape[0] != n:
        raise GeometryError(f"expected dimension {n}, got {arr.shape[0]}")
    return arr


def unit(v) -> np.ndarray:
    """Normalize, raising on (near-)zero input."""
    arr = as_vector(v)
    norm = float(np.linalg.norm(arr))
    if norm <= TOL:
        raise GeometryError("cannot normalize a zero vector")
    return arr / norm


def angle_between(v1, v2) -> float:
    """Angle in radians between two nonzero vectors, clamped into [0, pi]."""
    a = as_vector(v1)
    b = as_vector(v2)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= TOL or nb <= TOL:
        raise GeometryError("angle undefined for zero vectors")
    cosine = float(np.dot(a, b)) / (na * nb)
    # Rounding can push the cosine epsilon outside [-1, 1]; clamp before arccos.
    return float(np.arccos(np.clip(cosine, -1.0, 1.0)))


@dataclass(frozen=True, eq=False)
class GradientCone:
    """Set of directions within ``angle`` of the unit vector ``direction``."""

    direction: np.ndarray
    angle: float

    def __post_init__(self):
        d = as_vector(self.direction)
        if abs(float(np.linalg.norm(d)) - 1.0) > TOL:
            raise GeometryError("cone direction must be unit norm")
        if not (0.0 < self.angle <= np.pi / 2 + TOL):
            raise GeometryError(f"cone angle {self.angle} outside (0, pi/2]")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "angle", float(min(self.angle, np.pi / 2)))

    @classmethod
    def from_direction(cls, direction, angle: float) -> "GradientCone":
        """Build a cone, normalizing the direction first."""
        return cls(unit(direction), angle)


def cone_contains(cone: GradientCone, v, tol: float = TOL) -> bool:
    """True iff ``v`` lies within the cone (up to ``tol`` on the angle)."""
    return angle_between(v, cone.direction) <= cone.angle + tol


@dataclass(frozen=True, eq=False)
class Halfspace:
    """Constraint ``<normal, x> >= offset``."""

    normal: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        n = as_vector(self.normal)
        if float(np.linalg.norm(n)) <= TOL:
            raise GeometryError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def satisfied(self, x, tol: float = 1e-8) -> bool:
        return float(np.dot(self.normal, as_vector(x))) >= self.offset - tol


def orthonormal_extension(fixed, n: int) -> list[np.ndarray]:
    """Complete a set of independent vectors to an orthonormal basis of R^n.

    Returns the n - len(fixed) new unit vectors, each orthogonal to every
    fixed vector and to each other. Candidates are drawn from the standard
    basis in order, so the result is deterministic.
    """
    basis: list[np.ndarray] = []
    for f in fixed:
        v = as_vector(f, n).copy()
        for b in basis:
            v -= np.dot(v, b) * b
        norm = float(np.linalg.norm(v))
        if norm <= 1e-8:
            raise GeometryError("fixed vectors are linearly dependent")
        basis.append(v / norm)
    n_fixed = len(basis)
    if n_fixed >= n:
        return []
    extension: list[np.ndarray] = []
    for i in range(n):
        if len(basis) == n:
            break
        v = np.zeros(n)
        v[i] = 1.0
        # Two Gram-Schmidt passes for numerical stability.
        for _ in range(2):
            for b in basis:
                v -= np.dot(v, b) * b
        norm = float(np.linalg.norm(v))
        if norm <= 1e-8:
            continue
        v /= norm
        basis.append(v)
        extension.append(v)
    if len(basis) < n:
        raise GeometryError("failed to complete an orthonormal basis")
    return extension


def rotate_towards(u, w, phi: float) -> np.ndarray:
    """Rotate unit vector ``u`` towards the orthogonal unit vector ``w`` by ``phi``."""
    uu = as_vector(u)
    ww = as_vector(w, uu.shape[0])
    if abs(float(np.linalg.norm(uu)) - 1.0) > 1e-8 or abs(float(np.linalg.norm(ww)) - 1.0) > 1e-8:
        raise GeometryError("rotate_towards requires unit vectors")
    if abs(float(np.dot(uu, ww))) > 1e-8:
        raise GeometryError("rotate_towards requires orthogonal vectors")
    if not (0.0 <= phi <= np.pi / 2 + TOL):
        raise GeometryError(f"rotation angle {phi} outside [0, pi/2]")
    return uu * np.cos(phi) + ww * np.sin(phi)
