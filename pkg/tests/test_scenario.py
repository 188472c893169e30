import json

import numpy as np
import pytest

from formflight.scenario import (
    ConfigError,
    ValidationError,
    apply_override,
    ensure_valid,
    from_dict,
    load,
    problems,
    resolve,
    shipped_path,
)

from conftest import small_scenario


def test_defaults_fill_in():
    scenario = small_scenario()
    assert scenario.control.gamma == 2.0
    assert scenario.control.h == 0.05
    assert scenario.control.horizon == 10
    assert scenario.limits.thrust_min == 5.0
    assert np.allclose(scenario.safety.collision.semi_axes, [0.6, 0.6, 0.72])
    assert scenario.safety.m_r == 2


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        resolve({"name": "x", "controll": {}})
    with pytest.raises(ConfigError):
        resolve({"control": {"gama": 2.0}})


def test_override_round_trip():
    resolved = resolve({})
    apply_override(resolved, "control.gamma=2.5")
    apply_override(resolved, "duration=33")
    apply_override(resolved, "safety.perception_radius=4.0")
    assert resolved["control"]["gamma"] == 2.5
    assert resolved["duration"] == 33
    assert resolved["safety"]["perception_radius"] == 4.0


def test_override_unknown_key_is_hard_error():
    resolved = resolve({})
    with pytest.raises(ConfigError):
        apply_override(resolved, "control.gama=2.5")
    with pytest.raises(ConfigError):
        apply_override(resolved, "nonsense=1")
    with pytest.raises(ConfigError):
        apply_override(resolved, "control=1")  # names a section
    with pytest.raises(ConfigError):
        apply_override(resolved, "no_equals_sign")


def test_edge_convention_receiver_hears_sender():
    scenario = small_scenario(
        graph={
            "edges": [[0, 1, 2.0]],
            "offsets": [[0, 0, 0], [0, 1, 0]],
            "maneuver_velocity": [0, 0, 0],
        }
    )
    # vehicle 1 uses vehicle 0's state
    assert scenario.graph.adjacency[1, 0] == 2.0
    assert scenario.graph.adjacency[0, 1] == 0.0
    assert scenario.graph.neighbors(1) == [0]


def test_edge_validation():
    bad = {
        "graph": {
            "edges": [[0, 5, 1.0]],
            "offsets": [[0, 0, 0], [1, 0, 0]],
            "maneuver_velocity": [0, 0, 0],
        },
        "vehicles": {"initial_states": [{"position": [0, 0, 1]}, {"position": [2, 0, 1]}]},
    }
    with pytest.raises(ConfigError):
        from_dict(bad)


def test_schedule_validation():
    with pytest.raises(ConfigError):
        small_scenario(schedule=[{"step": 5, "offsets": [[0, 0, 0]]}])
    scenario = small_scenario(
        schedule=[{"step": 5, "offsets": [[0, 0, 0], [0, 9.0, 0]]}]
    )
    assert np.array_equal(scenario.offsets_at(4), scenario.graph.offsets)
    assert np.allclose(scenario.offsets_at(5)[1], [0, 9.0, 0])
    assert np.allclose(scenario.offsets_at(9)[1], [0, 9.0, 0])


def test_problems_flags_missing_tree_and_bad_gamma():
    scenario = small_scenario()
    found = problems(scenario)
    assert any("spanning tree" in p for p in found)
    assert ensure_valid(scenario) == found  # non-strict mode returns findings

    strict = small_scenario(strict=True)
    with pytest.raises(ValidationError):
        ensure_valid(strict)


def test_problems_flags_overlapping_starts():
    scenario = small_scenario(
        graph={
            "edges": [[0, 1, 1.0], [1, 0, 1.0]],
            "offsets": [[0, 0, 0], [0, 1.5, 0]],
            "maneuver_velocity": [0, 0, 0],
        },
        vehicles={
            "initial_states": [
                {"position": [0, 0, 1.5]},
                {"position": [0, 0.3, 1.5]},
            ]
        },
    )
    assert any("collision ellipsoid" in p for p in problems(scenario))


def test_shipped_scenarios_pass_validation():
    for name in ("hexagon", "mas", "free7"):
        scenario = load(shipped_path(name))
        assert problems(scenario) == []
        assert scenario.strict


def test_load_applies_overrides(tmp_path):
    raw = {
        "graph": {
            "edges": [[0, 1, 1.0], [1, 0, 1.0]],
            "offsets": [[0, 0, 0], [0, 2, 0]],
            "maneuver_velocity": [0, 0, 0],
        },
        "vehicles": {
            "initial_states": [{"position": [0, 0, 1.5]}, {"position": [0, 2, 1.5]}]
        },
    }
    path = tmp_path / "scn.json"
    path.write_text(json.dumps(raw))
    scenario = load(path, overrides=["control.gamma=3.0", "duration=42"])
    assert scenario.control.gamma == 3.0
    assert scenario.duration == 42
    assert scenario.resolved["control"]["gamma"] == 3.0


def test_load_rejects_malformed_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load(path)
    with pytest.raises(ConfigError):
        load(tmp_path / "missing.json")
