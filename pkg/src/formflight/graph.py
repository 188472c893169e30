"""Directed communication graphs and the gain conditions they induce.

Adjacency convention: ``a[i, j] > 0`` means vehicle ``i`` uses vehicle
``j``'s state, so information flows ``j -> i``.  Connectivity is therefore
tested in that information-flow direction: the graph supports consensus when
some root vehicle's state can propagate to every other vehicle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]


class GraphError(ValueError):
    """Invalid graph structure or parameters."""


def _readonly(value, dtype=np.float64) -> Array:
    out = np.array(value, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FormationGraph:
    """Communication topology plus the formation geometry it carries.

    ``adjacency[i, j]`` is the weight with which vehicle ``i`` uses vehicle
    ``j``'s state; ``offsets[i]`` is vehicle ``i``'s desired slot in the
    formation and ``maneuver_velocity`` the common cruise velocity target.
    """

    adjacency: Array
    offsets: Array
    maneuver_velocity: Array

    def __post_init__(self):
        adj = _readonly(self.adjacency)
        off = _readonly(self.offsets)
        vstar = _readonly(self.maneuver_velocity)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {adj.shape}")
        n = adj.shape[0]
        if n < 2:
            raise GraphError(f"formation needs at least 2 vehicles, got {n}")
        if np.any(adj < 0):
            raise GraphError("adjacency weights must be nonnegative")
        if np.any(np.diag(adj) != 0):
            raise GraphError("self-weights a_ii must be zero")
        if off.shape != (n, 3):
            raise GraphError(f"offsets must have shape ({n}, 3), got {off.shape}")
        if vstar.shape != (3,):
            raise GraphError("maneuver_velocity must be a 3-vector")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "maneuver_velocity", vstar)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> list[int]:
        """Vehicles whose state vehicle ``i`` can read (``a_ij > 0``)."""
        return [int(j) for j in np.nonzero(self.adjacency[i])[0]]


@dataclass(frozen=True)
class GraphAnalysis:
    """Degree vector, Laplacian, max degree, and connectivity flag."""

    degree: Array
    laplacian: Array
    max_degree: float
    has_spanning_tree: bool

    def __post_init__(self):
        object.__setattr__(self, "degree", _readonly(self.degree))
        object.__setattr__(self, "laplacian", _readonly(self.laplacian))

    @property
    def n(self) -> int:
        return self.degree.shape[0]

    def adjacency(self) -> Array:
        """Recover the weight matrix from the Laplacian off-diagonal."""
        adj = -np.array(self.laplacian)
        np.fill_diagonal(adj, 0.0)
        return adj


@dataclass(frozen=True)
class GammaValidation:
    """Admissibility report for the velocity damping gain."""

    gamma: float
    h: float
    lower: float  # sqrt of the maximum degree
    upper: float  # 1 / h, exclusive
    valid: bool
    interval_empty: bool

    def describe(self) -> str:
        interval = f"[{self.lower:.6g}, {self.upper:.6g})"
        if self.interval_empty:
            return f"no admissible gain: interval {interval} is empty"
        verdict = "valid" if self.valid else "invalid"
        return f"gamma={self.gamma:.6g} {verdict} for interval {interval}"


def has_spanning_tree(graph: FormationGraph) -> bool:
    """True when some vehicle's information reaches every other vehicle.

    Runs one breadth-first search per candidate root over the edges
    ``j -> i`` for ``a_ij > 0``.
    """
    reach = graph.adjacency > 0  # reach[i, j]: i hears j directly
    n = graph.n
    for root in range(n):
        seen = np.zeros(n, dtype=bool)
        seen[root] = True
        frontier = [root]
        while frontier:
            j = frontier.pop()
            for i in np.nonzero(reach[:, j])[0]:
                if not seen[i]:
                    seen[i] = True
                    frontier.append(int(i))
        if seen.all():
            return True
    return False


def analyze(graph: FormationGraph) -> GraphAnalysis:
    """Degree vector, Laplacian ``L = D - A``, max degree, connectivity."""
    adj = graph.adjacency
    degree = adj.sum(axis=1)
    laplacian = np.diag(degree) - adj
    return GraphAnalysis(
        degree=degree,
        laplacian=laplacian,
        max_degree=float(degree.max()),
        has_spanning_tree=has_spanning_tree(graph),
    )


def validate_gamma(analysis: GraphAnalysis, gamma: float, h: float) -> GammaValidation:
    """Check ``sqrt(max_degree) <= gamma < 1/h`` and report the interval."""
    if h <= 0:
        raise GraphError("sample period h must be positive")
    lower = float(np.sqrt(analysis.max_degree))
    upper = 1.0 / h
    empty = lower >= upper
    valid = (not empty) and (lower <= gamma < upper)
    return GammaValidation(
        gamma=float(gamma),
        h=float(h),
        lower=lower,
        upper=upper,
        valid=valid,
        interval_empty=empty,
    )
