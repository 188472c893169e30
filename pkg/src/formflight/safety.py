"""Collision-avoidance geometry: obstacles, predictions, and bounds.

Static obstacles are vertical cylinders checked in the horizontal plane.
Moving neighbors are extrapolated at constant velocity; the growing
prediction error is bounded by a time-variant sphere, and the Minkowski sum
of that sphere with the inter-vehicle collision ellipsoid is enclosed in a
single outer ellipsoid so the avoidance condition stays one smooth
inequality per neighbor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder obstacle: planar center and safety radius."""

    center: Array  # (x, y)
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        if center.shape != (2,):
            raise ValueError("cylinder center must be an (x, y) pair")
        if self.radius <= 0:
            raise ValueError("cylinder radius must be positive")
        object.__setattr__(self, "center", center)


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoid centered at the origin.

    The two horizontal semi-axes are equal and strictly smaller than the
    vertical one (rotor downwash makes the vertical clearance requirement
    larger).
    """

    semi_axes: Array  # (a, b, c) with a == b < c

    def __post_init__(self):
        axes = np.asarray(self.semi_axes, dtype=np.float64)
        if axes.shape != (3,):
            raise ValueError("semi_axes must be a 3-vector")
        if np.any(axes <= 0):
            raise ValueError("semi-axes must be positive")
        if axes[0] != axes[1] or not axes[0] < axes[2]:
            raise ValueError("need semi_axes[0] == semi_axes[1] < semi_axes[2]")
        object.__setattr__(self, "semi_axes", axes)

    def scaled_distance(self, displacement) -> float:
        """``||diag(axes)^-1 d||``; values > 1 lie outside the ellipsoid."""
        d = np.asarray(displacement, dtype=np.float64)
        return float(np.sqrt(((d / self.semi_axes) ** 2).sum()))


def predict_neighbor(p_j, v_j, h: float, n_steps: int) -> Array:
    """Constant-velocity extrapolation ``p + v l h`` for ``l = 0..n_steps``.

    Returns an ``(n_steps + 1, 3)`` array whose first row is the current
    position.
    """
    if n_steps < 1:
        raise ValueError("need at least one prediction step")
    p_j = np.asarray(p_j, dtype=np.float64)
    v_j = np.asarray(v_j, dtype=np.float64)
    steps = np.arange(n_steps + 1, dtype=np.float64)
    return p_j[None, :] + steps[:, None] * (h * v_j)[None, :]


def error_radius(t_max: float, l: int, h: float, m_r: int) -> float:
    """Radius of the prediction-error sphere after ``l`` steps.

    ``0.5 t_max min(l h, m_r h)^2``: quadratic growth from the neighbor's
    worst-case acceleration, clamped after ``m_r`` steps so distant horizon
    stages do not become uselessly conservative.
    """
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    if m_r < 1:
        raise ValueError("m_r must be at least 1")
    dt = min(l * h, m_r * h)
    return 0.5 * t_max * dt * dt


def outer_ellipsoid(radius: float, collision: Ellipsoid) -> Ellipsoid:
    """Tightest-trace ellipsoid containing sphere(radius) + collision set.

    Treats both sets through their shape matrices (diagonal of squared
    semi-axes).  For shape matrices B (the sphere) and C the family
    ``(1 + 1/beta) B + (1 + beta) C`` is an outer bound on the Minkowski sum
    for every ``beta > 0``; the trace-minimal member takes
    ``beta = sqrt(tr(B) / tr(C))``.  This reduces exactly to ``C`` as the
    radius shrinks to zero and to a sphere of radius ``r + rho`` when ``C``
    is a sphere of radius ``rho``.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0.0:
        return collision
    axes_sq = collision.semi_axes**2
    beta = math.sqrt(3.0 * radius * radius / float(axes_sq.sum()))
    new_axes = np.sqrt((1.0 + 1.0 / beta) * radius * radius + (1.0 + beta) * axes_sq)
    return Ellipsoid(semi_axes=new_axes)


@dataclass(frozen=True)
class NeighborPrediction:
    """Predicted neighbor positions with per-step uncertainty envelopes."""

    neighbor_id: int
    positions: Array  # (N+1, 3)
    radii: Array  # (N+1,)
    outer: tuple[Ellipsoid, ...]  # per-step outer ellipsoid

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64)
        radii = np.asarray(self.radii, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValueError("positions must be (N+1, 3)")
        if radii.shape != (positions.shape[0],) or len(self.outer) != positions.shape[0]:
            raise ValueError("radii and outer must match the position count")
        if np.any(np.diff(radii) < 0):
            raise ValueError("error radii must be nondecreasing")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "radii", radii)

    @property
    def horizon(self) -> int:
        return self.positions.shape[0] - 1


def predict(
    neighbor_id: int,
    p_j,
    v_j,
    h: float,
    n_steps: int,
    t_max: float,
    m_r: int,
    collision: Ellipsoid,
) -> NeighborPrediction:
    """Full neighbor prediction: positions, error radii, outer ellipsoids."""
    positions = predict_neighbor(p_j, v_j, h, n_steps)
    radii = np.array([error_radius(t_max, l, h, m_r) for l in range(n_steps + 1)])
    outer = tuple(outer_ellipsoid(float(r), collision) for r in radii)
    return NeighborPrediction(
        neighbor_id=neighbor_id, positions=positions, radii=radii, outer=outer
    )


def first_collision(own_plan, neighbor: NeighborPrediction) -> Optional[int]:
    """Earliest horizon step where the own plan enters the neighbor envelope.

    Scans ``l = 0..N`` and returns the first index with
    ``||outer[l]^-1 (own[l] - predicted[l])|| < 1``, or ``None`` when the
    plans stay separated.  Only this first step needs a constraint; later
    overlaps are resolved by the receding horizon.
    """
    own_plan = np.asarray(own_plan, dtype=np.float64)
    if own_plan.shape != neighbor.positions.shape:
        raise ValueError(
            f"plan shape {own_plan.shape} != prediction shape {neighbor.positions.shape}"
        )
    for l in range(own_plan.shape[0]):
        if neighbor.outer[l].scaled_distance(own_plan[l] - neighbor.positions[l]) < 1.0:
            return l
    return None


def obstacle_clearance(p, cyl: Cylinder) -> float:
    """Signed horizontal distance from the cylinder surface (>= 0 is safe)."""
    p = np.asarray(p, dtype=np.float64)
    dx = p[0] - cyl.center[0]
    dy = p[1] - cyl.center[1]
    return math.sqrt(dx * dx + dy * dy) - cyl.radius
