import numpy as np
import pytest

from formflight import sim
from formflight.nmpc import (
    OcpSolution,
    OcpWeights,
    PhysicalLimits,
    ReciprocalConstraint,
    SolverSettings,
    build_ocp,
    first_input,
    penalized_objective,
    shift_warm_start,
    solve,
    stage_cost,
)
from formflight.safety import Cylinder, Ellipsoid
from formflight.scenario import load, shipped_path
from formflight.vehicle import ControlInput, VehicleParams, VehicleState, euler_step

PARAMS = VehicleParams()
LIMITS = PhysicalLimits()
WEIGHTS = OcpWeights()
G = PARAMS.gravity


def hover_problem(n_steps=10, position=(1.0, 2.0, 1.5)):
    x0 = VehicleState(p=position, v=[0, 0, 0])
    xref = np.tile(x0.as_array(), (n_steps + 1, 1))
    uref = np.tile([G, 0.0, 0.0, 0.0], (n_steps + 1, 1))
    return build_ocp(x0, xref, uref, [], [], LIMITS, WEIGHTS, PARAMS, n_steps, 0.05)


def random_problem(rng, n_steps=5, with_constraints=True):
    x0 = VehicleState(
        p=rng.normal(0, 1, 3) + [0, 0, 2.0],
        v=rng.normal(0, 0.3, 3),
        phi=float(rng.normal(0, 0.1)),
        theta=float(rng.normal(0, 0.1)),
        psi=float(rng.normal(0, 0.3)),
    )
    xref = np.tile(x0.as_array(), (n_steps + 1, 1)) + rng.normal(0, 0.3, (n_steps + 1, 9))
    uref = np.tile([G, 0, 0, 0], (n_steps + 1, 1))
    obstacles, reciprocal = [], []
    if with_constraints:
        obstacles = [Cylinder(center=x0.p[:2] + rng.normal(0, 0.5, 2), radius=0.5)]
        reciprocal = [
            ReciprocalConstraint(
                neighbor_id=1,
                step_index=int(rng.integers(2, n_steps + 1)),
                point=x0.p + rng.normal(0, 0.5, 3),
                ellipsoid=Ellipsoid(semi_axes=(0.7, 0.7, 0.9)),
            )
        ]
    return build_ocp(x0, xref, uref, obstacles, reciprocal, LIMITS, WEIGHTS, PARAMS,
                     n_steps, 0.05)


def test_stage_cost_examples():
    x = VehicleState(p=[0, 0, 0], v=[0, 0, 0])
    u = ControlInput(thrust=G)
    ref = x.as_array()
    uref = u.as_array()
    assert stage_cost(x, u, ref, uref, WEIGHTS) == 0.0
    shifted = VehicleState(p=[1, 0, 0], v=[0, 0, 0])
    assert np.isclose(stage_cost(shifted, u, ref, uref, WEIGHTS), 100.0)
    pushed = ControlInput(thrust=G + 1.0)
    assert np.isclose(stage_cost(x, pushed, ref, uref, WEIGHTS), 1.0)


def test_build_ocp_bookkeeping():
    problem = hover_problem()
    assert len(problem.obstacles) == 0 and len(problem.reciprocal) == 0

    rng = np.random.default_rng(0)
    problem = random_problem(rng)
    assert len(problem.obstacles) == 1 and len(problem.reciprocal) == 1

    # boundary reciprocal index is legal
    x0 = VehicleState(p=[0, 0, 1.5], v=[0, 0, 0])
    xref = np.tile(x0.as_array(), (6, 1))
    uref = np.tile([G, 0, 0, 0], (6, 1))
    con = ReciprocalConstraint(1, 5, [1, 0, 0], Ellipsoid((0.6, 0.6, 0.72)))
    build_ocp(x0, xref, uref, [], [con], LIMITS, WEIGHTS, PARAMS, 5, 0.05)
    with pytest.raises(ValueError):
        bad = ReciprocalConstraint(1, 6, [1, 0, 0], Ellipsoid((0.6, 0.6, 0.72)))
        build_ocp(x0, xref, uref, [], [bad], LIMITS, WEIGHTS, PARAMS, 5, 0.05)
    with pytest.raises(ValueError):
        build_ocp(x0, xref[:4], uref, [], [], LIMITS, WEIGHTS, PARAMS, 5, 0.05)


def test_solve_hover_is_exact():
    solution = solve(hover_problem())
    assert solution.status == "converged"
    assert solution.cost < 1e-9
    assert np.array_equal(first_input(solution).as_array(), [G, 0.0, 0.0, 0.0])


def test_solve_obstacle_between_vehicle_and_reference():
    n_steps = 10
    x0 = VehicleState(p=[0, 0, 1.5], v=[0.5, 0, 0])
    xref = np.tile(x0.as_array(), (n_steps + 1, 1))
    xref[:, 0] = 0.5 * 0.05 * np.arange(n_steps + 1)  # cruise straight ahead
    uref = np.tile([G, 0, 0, 0], (n_steps + 1, 1))
    cyl = Cylinder(center=(0.3, 0.0), radius=0.2)
    problem = build_ocp(x0, xref, uref, [cyl], [], LIMITS, WEIGHTS, PARAMS, n_steps, 0.05)
    solution = solve(problem)
    assert solution.max_violation <= 1e-3
    for l in range(2, n_steps + 1):
        p = solution.predicted_states[l, :2]
        assert np.linalg.norm(p - cyl.center) >= cyl.radius - 1e-3


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    for _ in range(5):
        problem = random_problem(rng)
        U = np.clip(
            rng.normal(0, 1, (5, 4)) + [G, 0, 0, 0], LIMITS.u_min, LIMITS.u_max
        )
        value, grad, _ = penalized_objective(problem, U, 50.0)
        eps = 1e-6
        for l in range(5):
            for c in range(4):
                up, down = U.copy(), U.copy()
                up[l, c] += eps
                down[l, c] -= eps
                v_up, _, _ = penalized_objective(problem, up, 50.0)
                v_dn, _, _ = penalized_objective(problem, down, 50.0)
                fd = (v_up - v_dn) / (2 * eps)
                assert abs(grad[l, c] - fd) / (abs(fd) + 1e-9) < 1e-4


def test_rollout_consistency_and_box_bounds():
    rng = np.random.default_rng(21)
    for _ in range(10):
        problem = random_problem(rng, n_steps=8)
        solution = solve(problem)
        x = problem.initial_state
        assert np.array_equal(solution.predicted_states[0], x.as_array())
        for l in range(8):
            x = euler_step(x, ControlInput.from_array(solution.inputs[l]), 0.05, PARAMS)
            assert np.array_equal(solution.predicted_states[l + 1], x.as_array())
        assert np.all(solution.inputs >= LIMITS.u_min)
        assert np.all(solution.inputs <= LIMITS.u_max)


def test_solver_determinism():
    rng = np.random.default_rng(33)
    problem = random_problem(rng)
    first = solve(problem)
    second = solve(problem)
    assert np.array_equal(first.inputs, second.inputs)
    assert np.array_equal(first.predicted_states, second.predicted_states)
    assert first.cost == second.cost
    assert first.iterations == second.iterations
    assert first.status == second.status
    third = solve(problem, warm_start=first)
    fourth = solve(problem, warm_start=first)
    assert np.array_equal(third.inputs, fourth.inputs)


def test_shift_warm_start():
    a = np.array([G, 0.1, -0.1, 0.0])
    b = np.array([G + 1, -0.2, 0.0, 0.05])
    solution = OcpSolution(
        inputs=np.stack([a, b]), predicted_states=np.zeros((3, 9)), cost=0.0,
        max_violation=0.0, iterations=0, status="converged", penalty_weight=10.0,
        multipliers=np.zeros(0),
    )
    shifted = shift_warm_start(solution)
    assert shifted.shape == (2, 4)
    assert np.array_equal(shifted[0], b) and np.array_equal(shifted[1], b)

    constant = OcpSolution(
        inputs=np.tile(a, (4, 1)), predicted_states=np.zeros((5, 9)), cost=0.0,
        max_violation=0.0, iterations=0, status="converged", penalty_weight=10.0,
        multipliers=np.zeros(0),
    )
    assert np.array_equal(shift_warm_start(constant), constant.inputs)


def test_first_input_is_pure_projection():
    solution = solve(hover_problem())
    one = first_input(solution)
    two = first_input(solution)
    assert np.array_equal(one.as_array(), solution.inputs[0])
    assert np.array_equal(one.as_array(), two.as_array())


def test_infeasible_fallback_returns_initial_iterate():
    # an initial speed far above the velocity bound cannot be fixed within
    # one step, so the solve must degrade gracefully
    n_steps = 5
    tight = PhysicalLimits(v_max=0.1)
    x0 = VehicleState(p=[0, 0, 1.5], v=[1.0, 0, 0])
    xref = np.tile(x0.as_array(), (n_steps + 1, 1))
    uref = np.tile([G, 0, 0, 0], (n_steps + 1, 1))
    problem = build_ocp(x0, xref, uref, [], [], tight, WEIGHTS, PARAMS, n_steps, 0.05)
    solution = solve(problem, settings=SolverSettings(max_iterations=100))
    assert solution.status == "infeasible_fallback"
    assert solution.max_violation > 1e-3
    assert np.all(solution.inputs >= tight.u_min)
    assert np.all(solution.inputs <= tight.u_max)


def test_warm_start_cuts_solver_effort():
    # warm starting pays off in the aggregate: over a band of the hexagon
    # run the shifted-plan/multiplier warm start needs well under threeq
    # quarters of the cold-start iteration total
    scenario = load(shipped_path("hexagon"))
    world = sim.World(scenario)
    for _ in range(150):
        sim.step(world)
    warm_total = 0
    cold_total = 0
    for _ in range(100):
        decision = sim.decide(world, 2)
        cold = solve(decision.problem, warm_start=None, settings=scenario.solver)
        warm_total += decision.solution.iterations
        cold_total += cold.iterations
        sim.step(world)
    assert warm_total < 0.85 * cold_total, (warm_total, cold_total)
