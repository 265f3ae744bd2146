import json
import math
import numpy as np
import pytest
from lanet.config import ProblemConfig
from lanet.core.domain.geometry import Pose2, Rigid2
from lanet.core.domain.scene import (
    AgentState,
    AgentTrack,
    AgentType,
    PolygonKind,
    Relation,
    agent_feature_tensor,
    polyline_headings,
    transform_scene,
)
from lanet.core.infrastructure.scene_io import (
    dumps_scene,
    load_scene,
    load_scene_dir,
    loads_scene,
    save_scene,
    scene_index,
)
from lanet.errors import SceneParseError, SchemaViolationError


def _track(xy, valid=None, velocity=1.0, heading=0.0) -> AgentTrack:
    states = [AgentState(pose=Pose2(x=x, y=y, heading=heading), velocity=velocity) for x, y in xy]
    return AgentTrack(
        agent_id="a",
        agent_type=AgentType.VEHICLE,
        states=states,
        valid=[True] * len(xy) if valid is None else valid,
    )


def test_golden_file_loads(tiny_scene):
    assert tiny_scene.scenario_id == "tiny_straight"
    assert len(tiny_scene.agents) == 2
    assert len(tiny_scene.polygons) == 3
    assert tiny_scene.target_indices == [0]
    assert tiny_scene.polygons[1].kind == PolygonKind.LANE_BOUNDARY
    assert [e.relation for e in tiny_scene.pl_adjacency] == [Relation.BOUNDARY_OF, Relation.BOUNDARY_OF]


def test_golden_round_trip_is_byte_identical(tiny_scene, golden_path, tmp_path):
    out = save_scene(tiny_scene, tmp_path / "copy.scene.json")
    assert out.read_bytes() == golden_path.read_bytes()
    assert dumps_scene(load_scene(out)) == golden_path.read_text(encoding="utf-8")


def test_synthetic_round_trip_is_byte_identical(synth_scene, tmp_path):
    first = save_scene(synth_scene, tmp_path / "a.scene.json")
    second = save_scene(load_scene(first), tmp_path / "b.scene.json")
    assert first.read_bytes() == second.read_bytes()


def test_hand_written_headings_survive_first_round_trip(golden_path, tmp_path):
    doc = json.loads(golden_path.read_text())
    headings = [2.9, -3.1, 0.1234567890123, math.pi, -1.0000000000000002, 3.0000000000000004, 1e-3, -0.7]
    k = 0
    for agent in doc["agents"]:
        for state in agent["states"]:
            state["pose"]["heading"] = headings[k % len(headings)]
            k += 1
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    path = tmp_path / "hand.scene.json"
    path.write_text(text, encoding="utf-8")
    assert dumps_scene(load_scene(path)) == text


def test_mismatched_states_and_valid_lengths(golden_path):
    doc = json.loads(golden_path.read_text())
    doc["agents"][0]["valid"] = doc["agents"][0]["valid"][:-1]
    with pytest.raises(SchemaViolationError) as info:
        loads_scene(json.dumps(doc))
    assert info.value.errors
    assert any("agents" in str(e["loc"]) for e in info.value.errors)


def test_wrong_number_of_states(golden_path):
    doc = json.loads(golden_path.read_text())
    for key in ("states", "valid"):
        doc["agents"][1][key] = doc["agents"][1][key][:3]
    with pytest.raises(SchemaViolationError, match="validation"):
        loads_scene(json.dumps(doc))


def test_boundary_without_boundary_of_edge(golden_path):
    doc = json.loads(golden_path.read_text())
    doc["adjacency"] = doc["adjacency"][:1]
    with pytest.raises(SchemaViolationError):
        loads_scene(json.dumps(doc))


def test_heading_off_tangent_is_rejected(golden_path):
    doc = json.loads(golden_path.read_text())
    doc["polygons"][0]["points"][1]["heading"] = 0.1
    with pytest.raises(SchemaViolationError):
        loads_scene(json.dumps(doc))


def test_target_needs_an_observed_step(golden_path):
    doc = json.loads(golden_path.read_text())
    doc["agents"][0]["valid"] = [False, False, True, True]
    with pytest.raises(SchemaViolationError):
        loads_scene(json.dumps(doc))


def test_not_json_raises_parse_error():
    with pytest.raises(SceneParseError):
        loads_scene("{not json")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scene(tmp_path / "nope.scene.json")


def test_scene_dir_is_sorted_and_indexed(tiny_scene, synth_scene, tmp_path):
    save_scene(synth_scene, tmp_path / f"{synth_scene.scenario_id}.scene.json")
    save_scene(tiny_scene, tmp_path / "tiny_straight.scene.json")
    (tmp_path / "notes.txt").write_text("ignored")
    scenes = load_scene_dir(tmp_path)
    assert [s.scenario_id for s in scenes] == sorted([synth_scene.scenario_id, "tiny_straight"])
    index = scene_index(tmp_path)
    assert len(index) == 2
    assert index["tiny_straight"] == tiny_scene
    with pytest.raises(KeyError):
        index["missing"]


def test_polyline_headings_repeat_last_chord():
    h = polyline_headings(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]))
    np.testing.assert_allclose(h, [0.0, math.pi / 2, math.pi / 2])


def test_stationary_agent_has_zero_motion():
    f = agent_feature_tensor(_track([(2.0, 3.0)] * 4), ProblemConfig(history_steps=4, future_steps=1))
    np.testing.assert_array_equal(f.features[:, 0], 0.0)
    assert f.motion_mask.all()


def test_constant_velocity_agent():
    xy = [(float(i), 0.0) for i in range(5)]
    f = agent_feature_tensor(_track(xy, velocity=10.0), ProblemConfig(history_steps=5, future_steps=1))
    np.testing.assert_allclose(f.features[1:, 0], 1.0)
    np.testing.assert_allclose(f.features[:, 1], 1.0)
    np.testing.assert_allclose(f.features[:, 2], 0.0)
    np.testing.assert_allclose(f.features[:, 3], 10.0)
    np.testing.assert_allclose(f.motion_heading[1:], 0.0)


def test_gap_at_step_three():
    xy = [(float(i), 0.0) for i in range(7)]
    valid = [True, True, True, False, True, True, True]
    f = agent_feature_tensor(_track(xy, valid), ProblemConfig(history_steps=6, future_steps=1))
    np.testing.assert_array_equal(f.step_mask, [True, True, True, False, True, True])
    np.testing.assert_array_equal(f.motion_mask, [True, True, True, False, False, True])
    np.testing.assert_array_equal(f.features[3], 0.0)
    assert f.features[4, 0] == 0.0
    assert f.features[5, 0] == pytest.approx(1.0)


def test_features_only_use_observed_steps():
    xy = [(float(i), 0.0) for i in range(6)]
    moved = xy[:3] + [(50.0, 50.0)] * 3
    config = ProblemConfig(history_steps=3, future_steps=3)
    a = agent_feature_tensor(_track(xy), config)
    b = agent_feature_tensor(_track(moved), config)
    np.testing.assert_array_equal(a.features, b.features)


def test_transform_scene_moves_every_pose(tiny_scene):
    g = Rigid2(angle=math.pi / 2, tx=10.0, ty=-5.0)
    moved = transform_scene(tiny_scene, g)
    p = moved.agents[0].states[3].pose
    assert (p.x, p.y, p.heading) == pytest.approx((10.0, -2.0, math.pi / 2))
    q = moved.polygons[1].points[0]
    assert (q.x, q.y) == pytest.approx((8.25, -5.0))
    assert moved.pl_adjacency == tiny_scene.pl_adjacency
