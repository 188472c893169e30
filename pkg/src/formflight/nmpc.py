"""Per-vehicle finite-horizon tracking controller.

Builds the receding-horizon optimal control problem -- quadratic tracking
and effort costs over a single-shooting Euler rollout, with obstacle,
reciprocal-avoidance, flying-area, and velocity inequalities and hard input
box bounds -- and solves it with the compiled projected-gradient/penalty
kernel.  Only the first input of a solution is ever applied; the rest seeds
the next solve as a shifted warm start.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from .safety import Cylinder, Ellipsoid
from .vehicle import INPUT_DIM, STATE_DIM, ControlInput, VehicleParams, VehicleState

Array = NDArray[np.float64]

STATUS_NAMES = {
    _kernels.STATUS_CONVERGED: "converged",
    _kernels.STATUS_MAX_ITER: "max_iter",
    _kernels.STATUS_INFEASIBLE: "infeasible_fallback",
}

DEFAULT_Q_STATE = 100.0 * np.array([1.0, 1.0, 3.0, 1.0, 1.0, 1.0, 0.1, 0.1, 0.1])
DEFAULT_Q_INPUT = np.array([1.0, 1.0, 1.0, 1.0])

# ceiling for the penalty weight a warm-started solve may resume at; starting
# deep into the stiff regime makes the first-order descent stall on slightly
# infeasible warm starts, so each solve re-escalates the last decades itself
PENALTY_RESUME_CAP = 4096.0


@dataclass(frozen=True)
class OcpWeights:
    """Diagonal entries of the state and input tracking weights."""

    q_state: Array = tuple(DEFAULT_Q_STATE)
    q_input: Array = tuple(DEFAULT_Q_INPUT)

    def __post_init__(self):
        qs = np.asarray(self.q_state, dtype=np.float64)
        qu = np.asarray(self.q_input, dtype=np.float64)
        if qs.shape != (STATE_DIM,) or qu.shape != (INPUT_DIM,):
            raise ValueError("weights must be diagonals of length 9 and 4")
        if np.any(qs < 0) or np.any(qu < 0):
            raise ValueError("weights must be nonnegative")
        if not np.any(qs > 0):
            raise ValueError("at least one state weight must be positive")
        object.__setattr__(self, "q_state", qs)
        object.__setattr__(self, "q_input", qu)


@dataclass(frozen=True)
class PhysicalLimits:
    """Flying-area box, speed bound, and input box."""

    p_min: Array = (-100.0, -100.0, 0.0)
    p_max: Array = (100.0, 100.0, 10.0)
    v_max: float = 3.0
    thrust_min: float = 5.0
    thrust_max: float = 15.0
    phi_max: float = 0.4
    theta_max: float = 0.4
    psi_rate_max: float = 0.1

    def __post_init__(self):
        p_min = np.asarray(self.p_min, dtype=np.float64)
        p_max = np.asarray(self.p_max, dtype=np.float64)
        if p_min.shape != (3,) or p_max.shape != (3,):
            raise ValueError("position bounds must be 3-vectors")
        if np.any(p_min >= p_max):
            raise ValueError("p_min must be componentwise below p_max")
        if not 0 < self.thrust_min < self.thrust_max:
            raise ValueError("need 0 < thrust_min < thrust_max")
        if min(self.phi_max, self.theta_max, self.psi_rate_max) <= 0:
            raise ValueError("attitude and yaw-rate bounds must be positive")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        object.__setattr__(self, "p_min", p_min)
        object.__setattr__(self, "p_max", p_max)

    @property
    def u_min(self) -> Array:
        return np.array(
            [self.thrust_min, -self.phi_max, -self.theta_max, -self.psi_rate_max]
        )

    @property
    def u_max(self) -> Array:
        return np.array(
            [self.thrust_max, self.phi_max, self.theta_max, self.psi_rate_max]
        )


@dataclass(frozen=True)
class ReciprocalConstraint:
    """Keep-out requirement at one horizon step against one neighbor."""

    neighbor_id: int
    step_index: int
    point: Array  # neighbor's predicted position at step_index
    ellipsoid: Ellipsoid  # outer envelope at step_index

    def __post_init__(self):
        point = np.asarray(self.point, dtype=np.float64)
        if point.shape != (3,):
            raise ValueError("constraint point must be a 3-vector")
        object.__setattr__(self, "point", point)


@dataclass(frozen=True)
class SolverSettings:
    """Iteration budget, feasibility tolerance, and penalty schedule."""

    max_iterations: int = 200
    constraint_tolerance: float = 1e-3
    penalty_initial: float = 10.0
    penalty_cap: float = 1e6


@dataclass(frozen=True)
class OcpProblem:
    """One vehicle's tracking problem at one control cycle."""

    initial_state: VehicleState
    reference_states: Array  # (N+1, 9)
    reference_inputs: Array  # (N+1, 4)
    obstacles: tuple[Cylinder, ...]
    reciprocal: tuple[ReciprocalConstraint, ...]
    limits: PhysicalLimits
    weights: OcpWeights
    params: VehicleParams
    horizon: int
    step_size: float


@dataclass(frozen=True)
class OcpSolution:
    """Optimized input sequence with its exact rollout and solve stats.

    ``predicted_states`` is always the Euler rollout of ``inputs`` from the
    measured state, so dynamic feasibility holds by construction.  ``cost``
    is the unpenalized tracking-plus-effort objective of that rollout;
    ``max_violation`` is the worst inequality residual over the plan stages
    (the stage-0 state is a measurement, not a decision).
    ``penalty_weight`` records the final exterior-penalty weight so the next
    receding-horizon solve can resume near it instead of re-climbing the
    schedule while a constraint stays active.
    """

    inputs: Array  # (N, 4)
    predicted_states: Array  # (N+1, 9)
    cost: float
    max_violation: float
    iterations: int
    status: str
    penalty_weight: float
    multipliers: Array  # final inequality-multiplier estimates


def stage_cost(
    x: VehicleState, u: ControlInput, x_ref, u_ref, weights: OcpWeights
) -> float:
    """Squared weighted tracking error plus squared weighted input error."""
    ex = x.as_array() - np.asarray(x_ref, dtype=np.float64)
    eu = u.as_array() - np.asarray(u_ref, dtype=np.float64)
    return float((weights.q_state * ex * ex).sum() + (weights.q_input * eu * eu).sum())


def build_ocp(
    x_now: VehicleState,
    reference_states,
    reference_inputs,
    obstacles: Sequence[Cylinder],
    reciprocal: Sequence[ReciprocalConstraint],
    limits: PhysicalLimits,
    weights: OcpWeights,
    params: VehicleParams,
    horizon: int,
    step_size: float,
) -> OcpProblem:
    """Assemble and validate one control cycle's problem record."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if step_size <= 0:
        raise ValueError("step size must be positive")
    xref = np.ascontiguousarray(reference_states, dtype=np.float64)
    uref = np.ascontiguousarray(reference_inputs, dtype=np.float64)
    if xref.shape != (horizon + 1, STATE_DIM):
        raise ValueError(
            f"reference states must be ({horizon + 1}, {STATE_DIM}), got {xref.shape}"
        )
    if uref.shape != (horizon + 1, INPUT_DIM):
        raise ValueError(
            f"reference inputs must be ({horizon + 1}, {INPUT_DIM}), got {uref.shape}"
        )
    for con in reciprocal:
        if not 0 <= con.step_index <= horizon:
            raise ValueError(f"reciprocal step index {con.step_index} outside horizon")
    return OcpProblem(
        initial_state=x_now,
        reference_states=xref,
        reference_inputs=uref,
        obstacles=tuple(obstacles),
        reciprocal=tuple(reciprocal),
        limits=limits,
        weights=weights,
        params=params,
        horizon=horizon,
        step_size=step_size,
    )


def _pack(problem: OcpProblem):
    """Flatten the problem into the arrays the compiled kernels expect."""
    obs = np.zeros((len(problem.obstacles), 3))
    for m, cyl in enumerate(problem.obstacles):
        obs[m, 0] = cyl.center[0]
        obs[m, 1] = cyl.center[1]
        obs[m, 2] = cyl.radius
    rec = np.zeros((len(problem.reciprocal), 7))
    for r, con in enumerate(problem.reciprocal):
        rec[r, 0] = float(con.step_index)
        rec[r, 1:4] = con.point
        rec[r, 4:7] = con.ellipsoid.semi_axes
    lim = problem.limits
    return (
        problem.initial_state.as_array(),
        problem.reference_states,
        problem.reference_inputs,
        problem.weights.q_state,
        problem.weights.q_input,
        obs,
        rec,
        lim.p_min,
        lim.p_max,
        lim.v_max,
        lim.u_min,
        lim.u_max,
        problem.params.as_array(),
        problem.step_size,
    )


def penalized_objective(
    problem: OcpProblem, inputs, penalty_weight: float
) -> tuple[float, Array, float]:
    """Penalized objective, analytic gradient, and worst violation.

    Exposed so the adjoint gradient can be verified against finite
    differences of the same scalar function.
    """
    U = np.ascontiguousarray(inputs, dtype=np.float64)
    if U.shape != (problem.horizon, INPUT_DIM):
        raise ValueError(f"inputs must be ({problem.horizon}, {INPUT_DIM})")
    x0, xref, uref, qd, qud, obs, rec, pmin, pmax, vmax, _, _, par, h = _pack(problem)
    lam = np.zeros(problem.horizon * (7 + obs.shape[0]) + rec.shape[0])
    G = np.empty_like(U)
    value, violation = _kernels.penalized_value_grad(
        U, x0, xref, uref, qd, qud, obs, rec, pmin, pmax, vmax, par, h,
        float(penalty_weight), lam, G,
    )
    return float(value), G, float(violation)


def shift_warm_start(previous: OcpSolution) -> Array:
    """Receding-horizon shift: drop the applied input, repeat the last."""
    inputs = previous.inputs
    if inputs.shape[0] < 1:
        raise ValueError("previous solution has no inputs")
    return np.concatenate([inputs[1:], inputs[-1:]], axis=0)


def first_input(solution: OcpSolution) -> ControlInput:
    """The one element of the plan that actually reaches the vehicle."""
    return ControlInput.from_array(solution.inputs[0])


def solve(
    problem: OcpProblem,
    warm_start: Optional[OcpSolution] = None,
    settings: SolverSettings = SolverSettings(),
) -> OcpSolution:
    """Solve one control cycle's problem.

    The initial iterate is the shifted previous solution when one is given,
    otherwise the reference inputs clipped to the input box.  If the solver
    cannot push the worst violation below the tolerance within its budget,
    the result is tagged ``infeasible_fallback`` and callers should treat it
    as degraded; the returned plan is still the best iterate found (never
    worse than the shifted previous plan under the solver's own merit), so
    applying its first input keeps the vehicle in closed loop instead of
    replaying a stale tail open loop.
    """
    (x0, xref, uref, qd, qud, obs, rec, pmin, pmax, vmax, umin, umax, par, h) = _pack(
        problem
    )
    n = problem.horizon
    block = 7 + obs.shape[0]
    n_con = n * block + rec.shape[0]
    mu_start = settings.penalty_initial
    lam_init = np.zeros(n_con)
    if warm_start is not None:
        if warm_start.inputs.shape != (n, INPUT_DIM):
            raise ValueError("warm start horizon does not match the problem")
        U_init = shift_warm_start(warm_start)
        # resume near the previous penalty level (halved so the weight can
        # relax once the constraint stops being active)
        mu_start = min(
            max(settings.penalty_initial, 0.5 * warm_start.penalty_weight),
            PENALTY_RESUME_CAP,
            settings.penalty_cap,
        )
        prev_lam = warm_start.multipliers
        if prev_lam.shape[0] == n * block:
            # shift the per-stage multiplier blocks one step like the inputs;
            # a length mismatch means the obstacle set changed, in which case
            # the estimates no longer align and descent restarts from zero
            lam_init[0 : (n - 1) * block] = prev_lam[block:]
            lam_init[(n - 1) * block : n * block] = prev_lam[(n - 1) * block :]
    else:
        U_init = np.clip(uref[:n], umin, umax)
    U_init = np.ascontiguousarray(U_init, dtype=np.float64)
    # a tilt of 1/g rad deflects like one unit of thrust, so scaling the
    # attitude channels by 1/g evens out the descent conditioning
    scale = np.array([1.0, 1.0 / problem.params.gravity, 1.0 / problem.params.gravity, 1.0])
    U, iterations, status_code, mu_final, lam_final = _kernels.solve_ocp(
        U_init, x0, xref, uref, qd, qud, obs, rec, pmin, pmax, vmax, umin, umax, par, h,
        scale,
        lam_init,
        mu_start,
        settings.penalty_cap,
        settings.constraint_tolerance,
        settings.max_iterations,
    )
    # never return something worse than the plan we started from, both sides
    # measured with the solver's final penalty state.  In particular, an
    # infeasible-tagged solve still returns the optimized best-effort plan:
    # it satisfies the current constraints at least as well as the stale
    # shifted plan, which only grows more wrong if the blockage persists.
    U_start = np.clip(U_init, umin, umax)
    f_final, _ = _kernels.penalized_value(
        U, x0, xref, uref, qd, qud, obs, rec, pmin, pmax, vmax, par, h,
        mu_final, lam_final,
    )
    f_start, _ = _kernels.penalized_value(
        U_start, x0, xref, uref, qd, qud, obs, rec, pmin, pmax, vmax, par, h,
        mu_final, lam_final,
    )
    if f_final > f_start:
        U = U_start
        if status_code == _kernels.STATUS_CONVERGED:
            status_code = _kernels.STATUS_INFEASIBLE
    X = _kernels.rollout(x0, U, h, par)
    cost = _kernels.tracking_cost(X, U, xref, uref, qd, qud)
    violation = _kernels.constraint_violation(X, obs, rec, pmin, pmax, vmax)
    return OcpSolution(
        inputs=U,
        predicted_states=X,
        cost=float(cost),
        max_violation=float(violation),
        iterations=int(iterations),
        status=STATUS_NAMES[int(status_code)],
        penalty_weight=float(mu_final),
        multipliers=lam_final[: n * block].copy(),
    )
