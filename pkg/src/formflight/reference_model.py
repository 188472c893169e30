"""Linear reference model driven by a distributed formation consensus law.

Each vehicle carries a discrete double integrator ``(z, z_v)`` whose input is
the consensus acceleration computed from relative measurements of its graph
neighbors.  The tracking controller then follows ``(z, z_v)`` instead of
coordinating directly, which decouples formation logic from the nonlinear
vehicle dynamics.

The module also assembles the ``2n x 2n`` transition matrix of the stacked
offset-corrected reference states, whose stochasticity and spectrum certify
formation convergence numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .graph import GraphAnalysis

Array = NDArray[np.float64]


class SpectralError(RuntimeError):
    """Eigenvalue computation failed to converge."""


@dataclass(frozen=True)
class ReferenceOutput:
    """Reference position and velocity of one vehicle at one step."""

    z: Array
    z_v: Array

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        z_v = np.asarray(self.z_v, dtype=np.float64)
        if z.shape != (3,) or z_v.shape != (3,):
            raise ValueError("reference output components must be 3-vectors")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "z_v", z_v)


@dataclass(frozen=True)
class NeighborMeasurement:
    """Relative measurement of one neighbor: ``p_j - p_i``, its weight, and
    the neighbor's formation slot."""

    neighbor_id: int
    relative_position: Array
    weight: float
    offset: Array

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("neighbor weight must be positive")
        rel = np.asarray(self.relative_position, dtype=np.float64)
        off = np.asarray(self.offset, dtype=np.float64)
        if rel.shape != (3,) or off.shape != (3,):
            raise ValueError("measurement components must be 3-vectors")
        object.__setattr__(self, "relative_position", rel)
        object.__setattr__(self, "offset", off)


def formation_input(
    self_velocity,
    self_offset,
    neighbors: Sequence[NeighborMeasurement],
    v_star,
    gamma: float,
) -> Array:
    """Consensus acceleration for one vehicle from current measurements.

    Sums ``a_ij`` times the slot-corrected relative position
    ``(p_j - delta_j) - (p_i - delta_i)`` over the neighbors and adds the
    velocity damping term ``-2 gamma (v_i - v*)``.  At the equilibrium the
    relative positions equal the desired ``delta_i - delta_j`` and the
    velocity equals ``v*``, so the input vanishes.

    An empty neighbor list is legal; only the damping term remains.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    self_velocity = np.asarray(self_velocity, dtype=np.float64)
    self_offset = np.asarray(self_offset, dtype=np.float64)
    v_star = np.asarray(v_star, dtype=np.float64)
    u_f = -2.0 * gamma * (self_velocity - v_star)
    for m in neighbors:
        u_f = u_f + m.weight * (m.relative_position - (m.offset - self_offset))
    return u_f


def step(ref: ReferenceOutput, u_f, h: float) -> ReferenceOutput:
    """One forward-difference step of the double integrator."""
    if h <= 0:
        raise ValueError("step size h must be positive")
    u_f = np.asarray(u_f, dtype=np.float64)
    return ReferenceOutput(z=ref.z + h * ref.z_v, z_v=ref.z_v + h * u_f)


def predict_horizon(
    ref: ReferenceOutput, u_f_now, h: float, n_steps: int
) -> list[ReferenceOutput]:
    """Roll the reference model ``n_steps`` ahead holding the input fixed.

    Future relative measurements are unavailable without communicating
    predicted trajectories, so the current consensus input is frozen over
    the horizon.  Element 0 is the input reference itself.
    """
    if n_steps < 1:
        raise ValueError("horizon must be at least 1 step")
    out = [ref]
    for _ in range(n_steps):
        ref = step(ref, u_f_now, h)
        out.append(ref)
    return out


@dataclass(frozen=True)
class XiMatrix:
    """Stacked reference-model transition matrix with block metadata.

    ``entries`` is ``2n x 2n``; vehicle ``i`` owns rows/columns ``2i`` (the
    offset-corrected position component) and ``2i + 1`` (the mixed
    position-velocity component).
    """

    entries: Array

    def __post_init__(self):
        ent = np.asarray(self.entries, dtype=np.float64)
        if ent.ndim != 2 or ent.shape[0] != ent.shape[1] or ent.shape[0] % 2:
            raise ValueError("entries must be a 2n x 2n matrix")
        object.__setattr__(self, "entries", ent)

    @property
    def n(self) -> int:
        return self.entries.shape[0] // 2

    def block_rows(self, i: int) -> tuple[int, int]:
        return 2 * i, 2 * i + 1

    def row_sum_residual(self) -> float:
        """Largest deviation of a row sum from 1 (stochasticity check)."""
        return float(np.abs(self.entries.sum(axis=1) - 1.0).max())


def build_xi(analysis: GraphAnalysis, gamma: float, h: float) -> XiMatrix:
    """Assemble the per-pair 2x2 blocks of the stacked transition matrix.

    Diagonal block of vehicle ``i``::

        [ 1 - gamma h              gamma h    ]
        [ gamma h - d_i h / gamma  1 - gamma h]

    Off-diagonal block toward neighbor ``j`` has ``a_ij h / gamma`` in its
    lower-left entry and zeros elsewhere.  Every row sums to 1 by
    construction; all entries are nonnegative when
    ``sqrt(max_degree) <= gamma < 1/h``.
    """
    if gamma <= 0 or h <= 0:
        raise ValueError("gamma and h must be positive")
    n = analysis.n
    degree = analysis.degree
    adj = analysis.adjacency()
    xi = np.zeros((2 * n, 2 * n))
    gh = gamma * h
    for i in range(n):
        r = 2 * i
        xi[r, r] = 1.0 - gh
        xi[r, r + 1] = gh
        xi[r + 1, r] = gh - degree[i] * h / gamma
        xi[r + 1, r + 1] = 1.0 - gh
        for j in range(n):
            if j != i and adj[i, j] != 0.0:
                xi[r + 1, 2 * j] = adj[i, j] * h / gamma
    return XiMatrix(entries=xi)


@dataclass(frozen=True)
class SpectralReport:
    """Multiplicity of the unit eigenvalue and modulus of the runner-up."""

    eigenvalue_one_multiplicity: int
    max_other_modulus: float
    eigenvalues: Array

    def converges(self) -> bool:
        return self.eigenvalue_one_multiplicity == 1 and self.max_other_modulus < 1.0


def spectral_report(xi: XiMatrix, tol: float = 1e-8) -> SpectralReport:
    """Eigenvalue diagnosis of the stacked transition matrix.

    Counts eigenvalues within ``tol`` of 1 and reports the largest modulus
    among the rest.  A simple unit eigenvalue with everything else strictly
    inside the unit circle certifies asymptotic formation convergence of the
    reference models.
    """
    try:
        eigs = np.linalg.eigvals(xi.entries)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigenvalue computation failed: {exc}") from exc
    near_one = np.abs(eigs - 1.0) <= tol
    multiplicity = int(near_one.sum())
    others = np.abs(eigs[~near_one])
    max_other = float(others.max()) if others.size else 0.0
    return SpectralReport(
        eigenvalue_one_multiplicity=multiplicity,
        max_other_modulus=max_other,
        eigenvalues=eigs,
    )
