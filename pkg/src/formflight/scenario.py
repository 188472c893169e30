"""Scenario files: schema, defaults, dotted overrides, and validation.

A scenario is a single JSON document describing the whole world of one run:
communication graph and formation offsets, initial vehicle states, physical
parameters and limits, obstacle field, controller weights and safety
settings, and an optional schedule of formation-offset switches.  Every key
has a default; unknown keys (in files or overrides) are hard errors so typos
cannot silently change an experiment.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .graph import FormationGraph, analyze, validate_gamma
from .nmpc import OcpWeights, PhysicalLimits, SolverSettings
from .safety import Cylinder, Ellipsoid
from .vehicle import VehicleParams, VehicleState

Array = NDArray[np.float64]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed scenario document or override."""


class ValidationError(ValueError):
    """Structurally sound scenario that fails its physical preconditions."""


DEFAULTS: dict = {
    "schema_version": SCHEMA_VERSION,
    "name": "scenario",
    "duration": 1200,
    "strict": True,
    "control": {"gamma": 2.0, "h": 0.05, "horizon": 10, "reference_leak": 2.0, "leak_deadband": 0.25},
    "graph": {
        "edges": [],
        "offsets": [],
        "maneuver_velocity": [0.5, 0.0, 0.0],
    },
    "vehicles": {"initial_states": []},
    "vehicle": {
        "tau_phi": 0.116,
        "tau_theta": 0.116,
        "k_phi": 1.0,
        "k_theta": 1.0,
        "damping": [0.1, 0.1, 0.2],
        "gravity": 9.81,
    },
    "obstacles": [],
    "limits": {
        "p_min": [-10.0, -10.0, 0.0],
        "p_max": [50.0, 10.0, 4.0],
        "v_max": 3.0,
        "thrust_min": 5.0,
        "thrust_max": 15.0,
        "phi_max": 0.4,
        "theta_max": 0.4,
        "psi_rate_max": 0.1,
    },
    "weights": {
        "q_state": [100.0, 100.0, 300.0, 100.0, 100.0, 100.0, 10.0, 10.0, 10.0],
        "q_input": [1.0, 1.0, 1.0, 1.0],
    },
    "safety": {
        "ellipsoid": [0.6, 0.6, 0.72],
        "t_max": 2.0,
        "m_r": 2,
        "perception_radius": None,
        "obstacle_margin": 0.05,
        "reciprocal_margin": 0.05,
    },
    "nmpc": {
        "max_iterations": 200,
        "constraint_tolerance": 1e-3,
        "penalty_initial": 10.0,
        "penalty_cap": 1e6,
    },
    "schedule": [],
}

_ENTRY_KEYS = {
    "obstacles": {"x", "y", "radius"},
    "schedule": {"step", "offsets"},
    "initial_states": {"position", "velocity", "attitude"},
}


@dataclass(frozen=True)
class SafetyConfig:
    """Collision ellipsoid and neighbor-prediction parameters.

    ``obstacle_margin`` is added to the obstacle radii the controller sees
    and ``reciprocal_margin`` to the collision-ellipsoid semi-axes used for
    neighbor keep-out constraints.  Penalty solvers approach constraints
    from the infeasible side, so without a tightening margin the true
    clearance could dip to the solver tolerance below the threshold; the
    margins keep it strictly on the safe side.  Metrics always use the true
    radii and the true ellipsoid.
    """

    collision: Ellipsoid
    t_max: float
    m_r: int
    perception_radius: Optional[float]
    obstacle_margin: float = 0.05
    reciprocal_margin: float = 0.05


@dataclass(frozen=True)
class ControlConfig:
    """Consensus gain, sample period, horizon, and the reference leak.

    ``reference_leak`` (1/s) and ``leak_deadband`` (m) form an anti-windup
    term: each step the reference position drains ``leak * h`` of its error
    excess beyond the deadband back toward the measured position.  The
    reference model is otherwise open loop, so when actuators saturate (a
    blocked vehicle, say) it would keep integrating away and later demand a
    multi-meter catch-up sprint that destabilizes the whole formation.
    Healthy tracking errors stay inside the deadband, where the reference
    dynamics -- and the convergence theory built on them -- are untouched.
    """

    gamma: float
    h: float
    horizon: int
    reference_leak: float = 2.0
    leak_deadband: float = 0.25


@dataclass(frozen=True)
class OffsetSwitch:
    """Formation-offset replacement taking effect at a given step."""

    step: int
    offsets: Array

    def __post_init__(self):
        object.__setattr__(
            self, "offsets", np.asarray(self.offsets, dtype=np.float64)
        )


@dataclass(frozen=True)
class Scenario:
    """Fully resolved world description for one deterministic run."""

    name: str
    graph: FormationGraph
    initial_states: tuple[VehicleState, ...]
    params: VehicleParams
    obstacles: tuple[Cylinder, ...]
    limits: PhysicalLimits
    weights: OcpWeights
    safety: SafetyConfig
    control: ControlConfig
    solver: SolverSettings
    duration: int
    schedule: tuple[OffsetSwitch, ...]
    strict: bool
    resolved: dict

    @property
    def n(self) -> int:
        return self.graph.n

    def offsets_at(self, k: int) -> Array:
        """Formation offsets active at step ``k`` under the switch schedule."""
        offsets = self.graph.offsets
        for switch in self.schedule:
            if switch.step <= k:
                offsets = switch.offsets
            else:
                break
        return offsets


def _merge(defaults: dict, raw: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in raw.items():
        if key not in defaults:
            raise ConfigError(f"unknown key '{path}{key}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{path}{key}' must be an object")
            out[key] = _merge(defaults[key], value, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check_entries(resolved: dict) -> None:
    for m, entry in enumerate(resolved["obstacles"]):
        if not isinstance(entry, dict) or set(entry) - _ENTRY_KEYS["obstacles"]:
            raise ConfigError(f"obstacles[{m}] must have keys x, y, radius")
    for s, entry in enumerate(resolved["schedule"]):
        if not isinstance(entry, dict) or set(entry) - _ENTRY_KEYS["schedule"]:
            raise ConfigError(f"schedule[{s}] must have keys step, offsets")
    for i, entry in enumerate(resolved["vehicles"]["initial_states"]):
        if not isinstance(entry, dict) or set(entry) - _ENTRY_KEYS["initial_states"]:
            raise ConfigError(
                f"vehicles.initial_states[{i}] allows keys position, velocity, attitude"
            )


def resolve(raw: dict) -> dict:
    """Apply defaults to a raw document, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError("scenario document must be a JSON object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    resolved = _merge(DEFAULTS, raw, "")
    _check_entries(resolved)
    return resolved


def apply_override(resolved: dict, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override to a resolved document.

    The dotted path must name an existing schema key; values are parsed as
    JSON with a plain-string fallback.
    """
    key, sep, text = assignment.partition("=")
    if not sep:
        raise ConfigError(f"override '{assignment}' is not of the form key=value")
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    node = resolved
    parts = key.split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"override names unknown key '{key}'")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"override names unknown key '{key}'")
    if isinstance(node[leaf], dict):
        raise ConfigError(f"override '{key}' names a section, not a value")
    node[leaf] = value


def from_dict(raw: dict) -> Scenario:
    """Build a :class:`Scenario` from a raw (possibly partial) document."""
    resolved = resolve(raw)
    g = resolved["graph"]
    offsets = np.asarray(g["offsets"], dtype=np.float64)
    if offsets.ndim != 2 or offsets.shape[1] != 3 or offsets.shape[0] < 2:
        raise ConfigError("graph.offsets must list one 3-vector per vehicle (>= 2)")
    n = offsets.shape[0]
    adjacency = np.zeros((n, n))
    for e, edge in enumerate(g["edges"]):
        if len(edge) == 2:
            src, dst, weight = edge[0], edge[1], 1.0
        elif len(edge) == 3:
            src, dst, weight = edge
        else:
            raise ConfigError(f"graph.edges[{e}] must be (from, to[, weight])")
        if not (0 <= src < n and 0 <= dst < n):
            raise ConfigError(f"graph.edges[{e}] names vehicle outside 0..{n - 1}")
        if weight <= 0:
            raise ConfigError(f"graph.edges[{e}] weight must be positive")
        # the receiving vehicle 'dst' uses the sender's state
        adjacency[int(dst), int(src)] = float(weight)
    graph = FormationGraph(
        adjacency=adjacency,
        offsets=offsets,
        maneuver_velocity=np.asarray(g["maneuver_velocity"], dtype=np.float64),
    )

    raw_states = resolved["vehicles"]["initial_states"]
    if len(raw_states) != n:
        raise ConfigError(
            f"vehicles.initial_states has {len(raw_states)} entries for {n} vehicles"
        )
    states = []
    for entry in raw_states:
        att = entry.get("attitude", [0.0, 0.0, 0.0])
        states.append(
            VehicleState(
                p=np.asarray(entry["position"], dtype=np.float64),
                v=np.asarray(entry.get("velocity", [0.0, 0.0, 0.0]), dtype=np.float64),
                phi=float(att[0]),
                theta=float(att[1]),
                psi=float(att[2]),
            )
        )

    v = resolved["vehicle"]
    params = VehicleParams(
        tau_phi=v["tau_phi"],
        tau_theta=v["tau_theta"],
        k_phi=v["k_phi"],
        k_theta=v["k_theta"],
        damping=v["damping"],
        gravity=v["gravity"],
    )
    obstacles = tuple(
        Cylinder(center=(o["x"], o["y"]), radius=o["radius"])
        for o in resolved["obstacles"]
    )
    lim = resolved["limits"]
    limits = PhysicalLimits(
        p_min=lim["p_min"],
        p_max=lim["p_max"],
        v_max=lim["v_max"],
        thrust_min=lim["thrust_min"],
        thrust_max=lim["thrust_max"],
        phi_max=lim["phi_max"],
        theta_max=lim["theta_max"],
        psi_rate_max=lim["psi_rate_max"],
    )
    weights = OcpWeights(
        q_state=resolved["weights"]["q_state"],
        q_input=resolved["weights"]["q_input"],
    )
    s = resolved["safety"]
    radius = s["perception_radius"]
    safety = SafetyConfig(
        collision=Ellipsoid(semi_axes=s["ellipsoid"]),
        t_max=float(s["t_max"]),
        m_r=int(s["m_r"]),
        perception_radius=None if radius is None else float(radius),
        obstacle_margin=float(s["obstacle_margin"]),
        reciprocal_margin=float(s["reciprocal_margin"]),
    )
    c = resolved["control"]
    control = ControlConfig(
        gamma=float(c["gamma"]),
        h=float(c["h"]),
        horizon=int(c["horizon"]),
        reference_leak=float(c["reference_leak"]),
        leak_deadband=float(c["leak_deadband"]),
    )
    if control.gamma <= 0 or control.h <= 0 or control.horizon < 1:
        raise ConfigError("control requires gamma > 0, h > 0, horizon >= 1")
    if control.reference_leak < 0 or control.reference_leak * control.h >= 1:
        raise ConfigError("control.reference_leak must lie in [0, 1/h)")
    if control.leak_deadband < 0:
        raise ConfigError("control.leak_deadband must be nonnegative")
    o = resolved["nmpc"]
    solver = SolverSettings(
        max_iterations=int(o["max_iterations"]),
        constraint_tolerance=float(o["constraint_tolerance"]),
        penalty_initial=float(o["penalty_initial"]),
        penalty_cap=float(o["penalty_cap"]),
    )
    duration = int(resolved["duration"])
    if duration < 1:
        raise ConfigError("duration must be at least 1 step")
    switches = []
    last_step = -1
    for entry in resolved["schedule"]:
        offs = np.asarray(entry["offsets"], dtype=np.float64)
        if offs.shape != (n, 3):
            raise ConfigError(f"schedule offsets must have shape ({n}, 3)")
        step = int(entry["step"])
        if step <= last_step:
            raise ConfigError("schedule steps must be strictly increasing")
        last_step = step
        switches.append(OffsetSwitch(step=step, offsets=offs))

    return Scenario(
        name=str(resolved["name"]),
        graph=graph,
        initial_states=tuple(states),
        params=params,
        obstacles=obstacles,
        limits=limits,
        weights=weights,
        safety=safety,
        control=control,
        solver=solver,
        duration=duration,
        schedule=tuple(switches),
        strict=bool(resolved["strict"]),
        resolved=resolved,
    )


def load(path, overrides: Sequence[str] = ()) -> Scenario:
    """Load a scenario file and apply dotted-key overrides."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file is not valid JSON: {exc}") from exc
    resolved = resolve(raw)
    for assignment in overrides:
        apply_override(resolved, assignment)
    return from_dict(resolved)


def problems(scenario: Scenario) -> list[str]:
    """Physical-validity findings; an empty list means the scenario passes.

    Checks the connectivity and gain conditions the consensus convergence
    theory requires, plus initial pairwise separation.
    """
    found = []
    analysis = analyze(scenario.graph)
    if not analysis.has_spanning_tree:
        found.append("communication graph has no directed spanning tree")
    report = validate_gamma(analysis, scenario.control.gamma, scenario.control.h)
    if not report.valid:
        found.append(f"damping gain out of range: {report.describe()}")
    states = scenario.initial_states
    for i in range(len(states)):
        for j in range(i + 1, len(states)):
            d = scenario.safety.collision.scaled_distance(states[i].p - states[j].p)
            if d <= 1.0:
                found.append(
                    f"vehicles {i} and {j} start inside the collision ellipsoid"
                    f" (scaled distance {d:.3f})"
                )
    if math.isfinite(scenario.duration) and scenario.schedule:
        if scenario.schedule[-1].step >= scenario.duration:
            found.append("schedule switch lies beyond the run duration")
    return found


def ensure_valid(scenario: Scenario) -> list[str]:
    """Raise on validation problems in strict mode; return them otherwise."""
    found = problems(scenario)
    if found and scenario.strict:
        raise ValidationError("; ".join(found))
    return found


def shipped_path(name: str) -> Path:
    """Filesystem path of a scenario shipped inside the package."""
    candidate = resources.files("formflight") / "scenarios" / f"{name}.json"
    with resources.as_file(candidate) as path:
        return Path(path)
