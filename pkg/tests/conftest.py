import subprocess
import sys
import time
from dataclasses import dataclass

import numpy as np
import pytest

from formflight import sim
from formflight.scenario import Scenario, from_dict, load, shipped_path


@dataclass
class TimedRun:
    result: sim.RunResult
    wall_seconds: float


def run_cli(*args):
    """Invoke the command-line surface in a subprocess."""
    return subprocess.run(
        [sys.executable, "-m", "formflight", *args],
        capture_output=True,
        text=True,
    )


def small_scenario(**updates) -> Scenario:
    """Two idle vehicles far apart; handy base for unit tests."""
    raw = {
        "name": "tiny",
        "duration": 10,
        "strict": False,
        "graph": {
            "edges": [],
            "offsets": [[0.0, 0.0, 0.0], [0.0, 8.0, 0.0]],
            "maneuver_velocity": [0.0, 0.0, 0.0],
        },
        "vehicles": {
            "initial_states": [
                {"position": [0.0, 0.0, 1.5]},
                {"position": [0.0, 8.0, 1.5]},
            ]
        },
        "limits": {"p_min": [-20.0, -20.0, 0.0], "p_max": [20.0, 20.0, 4.0]},
    }
    for key, value in updates.items():
        raw[key] = value
    return from_dict(raw)


@pytest.fixture(scope="session")
def hexagon_run() -> TimedRun:
    scenario = load(shipped_path("hexagon"))
    start = time.perf_counter()
    result = sim.run(scenario, collect_solutions=True)
    return TimedRun(result=result, wall_seconds=time.perf_counter() - start)


@pytest.fixture(scope="session")
def mas_run() -> TimedRun:
    scenario = load(shipped_path("mas"))
    start = time.perf_counter()
    result = sim.run(scenario, collect_solutions=True)
    return TimedRun(result=result, wall_seconds=time.perf_counter() - start)


@pytest.fixture(scope="session")
def cli_runs(tmp_path_factory):
    """Each shipped scenario executed twice through the CLI."""
    out = {}
    for name in ("hexagon", "mas", "free7"):
        codes, dirs = [], []
        for rep in range(2):
            directory = tmp_path_factory.mktemp(f"run_{name}_{rep}")
            proc = run_cli(
                "run", "--scenario", str(shipped_path(name)),
                "--out", str(directory), "--quiet",
            )
            codes.append(proc.returncode)
            dirs.append(directory)
        out[name] = (codes, dirs)
    return out


def reachability_oracle(adjacency) -> bool:
    """Brute-force spanning-tree check in the information-flow direction."""
    adjacency = np.asarray(adjacency)
    n = adjacency.shape[0]
    for root in range(n):
        seen = {root}
        grew = True
        while grew:
            grew = False
            for i in range(n):
                if i in seen:
                    continue
                if any(adjacency[i, j] > 0 and j in seen for j in range(n)):
                    seen.add(i)
                    grew = True
        if len(seen) == n:
            return True
    return False


def random_spanning_digraph(rng, n):
    """Random weighted digraph guaranteed to contain a spanning tree."""
    adjacency = np.zeros((n, n))
    for child in range(1, n):
        parent = int(rng.integers(0, child))
        adjacency[child, parent] = rng.uniform(0.5, 2.0)
    extra = int(rng.integers(0, 2 * n))
    for _ in range(extra):
        i, j = rng.integers(0, n, size=2)
        if i != j:
            adjacency[i, j] = rng.uniform(0.5, 2.0)
    return adjacency
