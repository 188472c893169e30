"""Distributed formation flight for simulated quadrotor swarms.

Consensus-driven linear reference models over a directed communication
graph, tracked per vehicle by a nonlinear model-predictive controller with
obstacle and reciprocal collision avoidance, inside a deterministic
fixed-step simulator.
"""

from .graph import FormationGraph, GraphAnalysis, analyze, has_spanning_tree, validate_gamma
from .nmpc import (
    OcpProblem,
    OcpSolution,
    OcpWeights,
    PhysicalLimits,
    ReciprocalConstraint,
    SolverSettings,
    build_ocp,
    first_input,
    shift_warm_start,
    solve,
    stage_cost,
)
from .reference_model import (
    NeighborMeasurement,
    ReferenceOutput,
    XiMatrix,
    build_xi,
    formation_input,
    predict_horizon,
    spectral_report,
)
from .safety import (
    Cylinder,
    Ellipsoid,
    NeighborPrediction,
    error_radius,
    first_collision,
    obstacle_clearance,
    outer_ellipsoid,
    predict_neighbor,
)
from .scenario import Scenario, load as load_scenario, shipped_path
from .sim import MetricsSeries, RunResult, StepTrace, World, compute_metrics, run
from .vehicle import (
    ControlInput,
    VehicleParams,
    VehicleState,
    continuous_dynamics,
    euler_step,
    flat_reference_attitude,
    rotation_matrix,
)

__version__ = "0.1.0"
