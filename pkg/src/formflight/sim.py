"""Deterministic lockstep simulation of the formation-flight loop.

Each step takes a synchronous snapshot of all vehicle states and runs, per
vehicle: neighbor measurement gathering, the consensus input, the frozen
reference horizon with flat reference attitudes, neighbor motion prediction
with the first-collision check against the vehicle's previous plan, and one
predictive-controller solve.  Only then are all plants integrated one Euler
step and all reference models advanced.

A vehicle's decision reads nothing but its own state and reference, its
graph neighbors' positions and velocities, the obstacle list within its
perception radius, the formation offsets, and the maneuver velocity -- no
predicted trajectories are exchanged, so the controller is distributed in a
directly testable sense.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from . import safety
from .nmpc import (
    OcpProblem,
    OcpSolution,
    ReciprocalConstraint,
    build_ocp,
    first_input,
    solve,
)
from .reference_model import (
    NeighborMeasurement,
    ReferenceOutput,
    formation_input,
    predict_horizon,
    step as reference_step,
)
from .scenario import Scenario, ensure_valid
from .vehicle import ControlInput, VehicleState, euler_step, flat_reference_attitude

Array = NDArray[np.float64]


@dataclass(frozen=True)
class VehicleRecord:
    """Everything one vehicle saw and did during one step."""

    state: VehicleState
    applied_input: ControlInput
    reference: ReferenceOutput
    solver_status: str
    solver_iterations: int
    cost: float
    max_violation: float
    reciprocal: tuple[tuple[int, int], ...]  # (neighbor id, horizon index)
    obstacle_margin: float  # min predicted clearance; inf without obstacles


@dataclass(frozen=True)
class StepTrace:
    k: int
    vehicles: tuple[VehicleRecord, ...]


@dataclass(frozen=True)
class MetricsSeries:
    """Per-step formation, tracking, and separation metrics."""

    formation_error: Array  # (K,)
    velocity_error: Array  # (K, n)
    min_pairwise: Array  # (K,) ellipsoid-scaled inter-vehicle distance
    min_obstacle: Array  # (K,) signed clearance from obstacle surfaces


@dataclass(frozen=True)
class Decision:
    """One vehicle's full control decision for the current step."""

    vehicle: int
    consensus_input: Array
    problem: OcpProblem
    solution: OcpSolution
    reciprocal: tuple[ReciprocalConstraint, ...]
    detections: tuple[tuple[int, int], ...]  # (neighbor id, first-collision step)


@dataclass
class RunResult:
    scenario: Scenario
    steps: list[StepTrace]
    metrics: MetricsSeries
    solutions: Optional[list[tuple[OcpSolution, ...]]]
    warnings: list[str]


class World:
    """Mutable run state: plant states, reference models, warm starts."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.k = 0
        self.states = np.array([s.as_array() for s in scenario.initial_states])
        # reference models start at the measured states, so tracking error
        # is zero at step 0 and the consensus law does all the maneuvering
        self.references = self.states[:, 0:6].copy()
        self.offsets = np.array(scenario.graph.offsets)
        self.previous: list[Optional[OcpSolution]] = [None] * scenario.n

    def copy(self) -> "World":
        out = World.__new__(World)
        out.scenario = self.scenario
        out.k = self.k
        out.states = self.states.copy()
        out.references = self.references.copy()
        out.offsets = self.offsets.copy()
        out.previous = list(self.previous)
        return out


def decide(world: World, i: int) -> Decision:
    """Compute vehicle ``i``'s control decision from the current snapshot."""
    sc = world.scenario
    graph = sc.graph
    h = sc.control.h
    horizon = sc.control.horizon
    x_i = world.states[i]
    neighbors = graph.neighbors(i)
    measurements = [
        NeighborMeasurement(
            neighbor_id=j,
            relative_position=world.states[j, 0:3] - x_i[0:3],
            weight=float(graph.adjacency[i, j]),
            offset=world.offsets[j],
        )
        for j in neighbors
    ]
    u_f = formation_input(
        x_i[3:6], world.offsets[i], measurements, graph.maneuver_velocity,
        sc.control.gamma,
    )

    ref = ReferenceOutput(z=world.references[i, 0:3].copy(),
                          z_v=world.references[i, 3:6].copy())
    horizon_refs = predict_horizon(ref, u_f, h, horizon)
    xref = np.zeros((horizon + 1, 9))
    uref = np.zeros((horizon + 1, 4))
    gravity = sc.params.gravity
    d_z = sc.params.damping[2]
    for l, r in enumerate(horizon_refs):
        # the consensus demand can momentarily exceed what any attitude can
        # realize (downward specific force); clamp the demand used for the
        # attitude reference so it stays in the representable cone -- the
        # position/velocity references are untouched
        accel = u_f
        t_z = u_f[2] + gravity + d_z * r.z_v[2]
        if t_z < 0.1 * gravity:
            accel = u_f.copy()
            accel[2] = 0.1 * gravity - gravity - d_z * r.z_v[2]
        phi_r, theta_r, _ = flat_reference_attitude(accel, r.z_v, 0.0, sc.params)
        phi_r = min(max(phi_r, -sc.limits.phi_max), sc.limits.phi_max)
        theta_r = min(max(theta_r, -sc.limits.theta_max), sc.limits.theta_max)
        xref[l, 0:3] = r.z
        xref[l, 3:6] = r.z_v
        xref[l, 6] = phi_r
        xref[l, 7] = theta_r
        uref[l, 0] = gravity
        uref[l, 1] = phi_r
        uref[l, 2] = theta_r

    previous = world.previous[i]
    if previous is None:
        # no vetted plan yet: hold the current position
        own_plan = np.repeat(x_i[None, 0:3], horizon + 1, axis=0)
    else:
        # previous plan covered steps k-1 .. k-1+N; re-anchor it to the
        # current window by shifting one step and repeating the tail
        idx = np.minimum(np.arange(1, horizon + 2), horizon)
        own_plan = previous.predicted_states[idx, 0:3]

    reciprocal = []
    detections = []
    collision = sc.safety.collision
    if sc.safety.reciprocal_margin > 0.0:
        collision = safety.Ellipsoid(
            semi_axes=collision.semi_axes + sc.safety.reciprocal_margin
        )
    for j in neighbors:
        prediction = safety.predict(
            j,
            world.states[j, 0:3],
            world.states[j, 3:6],
            h,
            horizon,
            sc.safety.t_max,
            sc.safety.m_r,
            collision,
        )
        l_c = safety.first_collision(own_plan, prediction)
        if l_c is not None:
            detections.append((j, l_c))
            # keep-out over a short window from the first collision on:
            # a single constrained stage lets the rest of the plan keep
            # creeping in (mutual infeasibility once two deflected vehicles
            # squeeze together), while constraining the whole remaining
            # horizon makes evasions so violent they re-excite the formation
            for l in range(max(1, l_c), min(l_c + 3, horizon) + 1):
                reciprocal.append(
                    ReciprocalConstraint(
                        neighbor_id=j,
                        step_index=l,
                        point=prediction.positions[l],
                        ellipsoid=prediction.outer[l],
                    )
                )

    obstacles = sc.obstacles
    if sc.safety.perception_radius is not None:
        obstacles = tuple(
            cyl
            for cyl in obstacles
            if safety.obstacle_clearance(x_i[0:3], cyl) <= sc.safety.perception_radius
        )
    if sc.safety.obstacle_margin > 0.0:
        # the controller enforces inflated radii so the true clearance stays
        # strictly positive even at the solver's feasibility tolerance
        obstacles = tuple(
            safety.Cylinder(center=cyl.center, radius=cyl.radius + sc.safety.obstacle_margin)
            for cyl in obstacles
        )

    problem = build_ocp(
        VehicleState.from_array(x_i),
        xref,
        uref,
        obstacles,
        reciprocal,
        sc.limits,
        sc.weights,
        sc.params,
        horizon,
        h,
    )
    solution = solve(problem, warm_start=previous, settings=sc.solver)
    return Decision(
        vehicle=i,
        consensus_input=u_f,
        problem=problem,
        solution=solution,
        reciprocal=tuple(reciprocal),
        detections=tuple(detections),
    )


def _obstacle_margin(solution: OcpSolution, scenario: Scenario) -> float:
    """Worst predicted clearance against the true (uninflated) obstacles."""
    if not scenario.obstacles:
        return float("inf")
    worst = float("inf")
    for l in range(solution.predicted_states.shape[0]):
        p = solution.predicted_states[l, 0:3]
        for cyl in scenario.obstacles:
            clearance = safety.obstacle_clearance(p, cyl)
            if clearance < worst:
                worst = clearance
    return worst


def step(world: World) -> StepTrace:
    """Advance the world one sample period and record what happened."""
    sc = world.scenario
    k = world.k
    for switch in sc.schedule:
        if switch.step == k:
            world.offsets = np.array(switch.offsets)

    decisions = [decide(world, i) for i in range(sc.n)]

    records = []
    for i, dec in enumerate(decisions):
        applied = first_input(dec.solution)
        records.append(
            VehicleRecord(
                state=VehicleState.from_array(world.states[i]),
                applied_input=applied,
                reference=ReferenceOutput(
                    z=world.references[i, 0:3].copy(),
                    z_v=world.references[i, 3:6].copy(),
                ),
                solver_status=dec.solution.status,
                solver_iterations=dec.solution.iterations,
                cost=dec.solution.cost,
                max_violation=dec.solution.max_violation,
                reciprocal=dec.detections,
                obstacle_margin=_obstacle_margin(dec.solution, sc),
            )
        )

    # all decisions are taken on the step-k snapshot; only now move the world
    for i, dec in enumerate(decisions):
        next_state = euler_step(
            VehicleState.from_array(world.states[i]),
            records[i].applied_input,
            sc.control.h,
            sc.params,
        )
        world.states[i] = next_state.as_array()
        ref = reference_step(
            ReferenceOutput(
                z=world.references[i, 0:3].copy(),
                z_v=world.references[i, 3:6].copy(),
            ),
            dec.consensus_input,
            sc.control.h,
        )
        # anti-windup leak: drain the reference-position excess beyond the
        # deadband toward the measured position, so a saturated vehicle's
        # reference cannot integrate away and demand a catch-up sprint
        # later.  Healthy tracking errors stay inside the deadband, where
        # the term is exactly zero and the open-loop reference dynamics
        # (and their convergence rate) are untouched.  The reference
        # velocity is left alone: its excursions are already bounded through
        # the measured-velocity damping term of the consensus input.
        error = ref.z - next_state.p
        distance = float(np.linalg.norm(error))
        deadband = sc.control.leak_deadband
        if distance > deadband:
            leak = sc.control.reference_leak * sc.control.h
            shrink = leak * (distance - deadband) / distance
            world.references[i, 0:3] = ref.z - shrink * error
        else:
            world.references[i, 0:3] = ref.z
        world.references[i, 3:6] = ref.z_v
        world.previous[i] = dec.solution

    world.k = k + 1
    return StepTrace(k=k, vehicles=tuple(records))


def compute_metrics(steps: list[StepTrace], scenario: Scenario) -> MetricsSeries:
    """Formation error, velocity errors, and minimum separations per step."""
    if not steps:
        raise ValueError("trace is empty")
    n = scenario.n
    adjacency = scenario.graph.adjacency
    v_star = scenario.graph.maneuver_velocity
    axes = scenario.safety.collision.semi_axes
    count = len(steps)
    formation_error = np.zeros(count)
    velocity_error = np.zeros((count, n))
    min_pairwise = np.zeros(count)
    min_obstacle = np.zeros(count)
    centers = np.array([cyl.center for cyl in scenario.obstacles]).reshape(-1, 2)
    radii = np.array([cyl.radius for cyl in scenario.obstacles])
    for t, trace in enumerate(steps):
        offsets = scenario.offsets_at(trace.k)
        positions = np.array([r.state.p for r in trace.vehicles])
        velocities = np.array([r.state.v for r in trace.vehicles])
        rel = positions[:, None, :] - positions[None, :, :]
        desired = offsets[:, None, :] - offsets[None, :, :]
        formation_error[t] = float(
            (adjacency * np.linalg.norm(rel - desired, axis=2)).sum()
        )
        velocity_error[t] = np.linalg.norm(velocities - v_star, axis=1)
        scaled = np.linalg.norm(rel / axes, axis=2)
        scaled[np.diag_indices(n)] = np.inf
        min_pairwise[t] = float(scaled.min())
        if centers.shape[0]:
            dists = (
                np.linalg.norm(positions[:, None, 0:2] - centers[None, :, :], axis=2)
                - radii[None, :]
            )
            min_obstacle[t] = float(dists.min())
        else:
            min_obstacle[t] = np.inf
    return MetricsSeries(
        formation_error=formation_error,
        velocity_error=velocity_error,
        min_pairwise=min_pairwise,
        min_obstacle=min_obstacle,
    )


def run(
    scenario: Scenario,
    collect_solutions: bool = False,
    validate: bool = True,
) -> RunResult:
    """Simulate the whole scenario and compute its metric series."""
    warnings = ensure_valid(scenario) if validate else []
    world = World(scenario)
    steps = []
    solutions: Optional[list[tuple[OcpSolution, ...]]] = (
        [] if collect_solutions else None
    )
    for _ in range(scenario.duration):
        trace = step(world)
        steps.append(trace)
        if solutions is not None:
            solutions.append(tuple(world.previous))  # type: ignore[arg-type]
    metrics = compute_metrics(steps, scenario)
    return RunResult(
        scenario=scenario,
        steps=steps,
        metrics=metrics,
        solutions=solutions,
        warnings=warnings,
    )
