import json
import numpy as np
import pytest
import torch
from lanet.config import ProblemConfig
from lanet.core.domain.geometry import Pose2, encode_rel_input
from lanet.core.domain.scene import RELATIONS, MapPolygon, PolygonKind, Relation, Scene, polyline_headings, transform_scene
from lanet.core.infrastructure.scene_io import loads_scene
from lanet.core.model.map_encoder import MapEncoder, build_map_edges, build_map_graph, run_map_encoder
from lanet.core.nn.layers import zero_module
from lanet.errors import InvalidArgumentError


def _polygon(pid: str, xy) -> MapPolygon:
    xy = np.asarray(xy, dtype=float)
    points = [Pose2(x=x, y=y, heading=h) for (x, y), h in zip(xy, polyline_headings(xy))]
    return MapPolygon(polygon_id=pid, kind=PolygonKind.LANE_CENTERLINE, points=points)


def _map_scene(*polygons: MapPolygon) -> Scene:
    return Scene(scenario_id="map", config=ProblemConfig(history_steps=1, future_steps=1), polygons=list(polygons))


@pytest.fixture
def encoder(toy_model_config):
    return MapEncoder(toy_model_config).double()


@pytest.fixture
def mirrored_scene(golden_path):
    doc = json.loads(golden_path.read_text())
    copies = []
    for poly in doc["polygons"]:
        copy = json.loads(json.dumps(poly))
        copy["polygon_id"] += "_b"
        if copy["parent_id"]:
            copy["parent_id"] += "_b"
        for p in copy["points"]:
            p["y"] += 500.0
        copies.append(copy)
    n = len(doc["polygons"])
    doc["adjacency"] += [{**e, "source": e["source"] + n, "target": e["target"] + n} for e in doc["adjacency"]]
    doc["polygons"] += copies
    return loads_scene(json.dumps(doc))


def test_translated_copies_embed_identically(encoder):
    base = [(0.0, 0.0), (2.0, 1.0), (5.0, 1.5)]
    scene = _map_scene(_polygon("a", base), _polygon("b", [(x + 40.0, y - 7.0) for x, y in base]))
    x_pt, x_pl = encoder.encode_raw_map(build_map_graph(scene, 2))
    torch.testing.assert_close(x_pl[0], x_pl[1], atol=1e-12, rtol=0)
    torch.testing.assert_close(x_pt[:3], x_pt[3:], atol=1e-12, rtol=0)


def test_zero_mlps_give_bias_vectors(encoder, tiny_scene):
    zero_module(encoder.polygon_mlp)
    bias = torch.linspace(-1.0, 1.0, encoder.polygon_mlp.out_dim, dtype=torch.float64)
    with torch.no_grad():
        encoder.polygon_mlp.layers[-1].bias.copy_(bias)
    _, x_pl = encoder.encode_raw_map(build_map_graph(tiny_scene, 3))
    torch.testing.assert_close(x_pl, bias.expand(3, -1), atol=0, rtol=0)


def test_anchor_point_has_zero_relative_feature(tiny_scene):
    _, pt2pl, _, _ = build_map_edges(tiny_scene, 3)
    first_points = [0, 3, 6]
    np.testing.assert_array_equal(pt2pl.rel[first_points], 0.0)
    np.testing.assert_array_equal(pt2pl.targets, [0, 0, 0, 1, 1, 1, 2, 2, 2])


def test_no_crosswalk_no_crossing_edges(synth_scene):
    graph = build_map_graph(synth_scene, 3)
    assert RELATIONS.index(Relation.CROSSING) not in graph.pl2pl_relation.tolist()
    assert len(graph.pl2pl) == len(synth_scene.pl_adjacency)


def test_edge_inputs_are_rigid_invariant(synth_scene, rng, random_rigid):
    base = build_map_graph(synth_scene, 3)
    for _ in range(3):
        moved = build_map_graph(transform_scene(synth_scene, random_rigid(rng)), 3)
        for name in ("pt2pt", "pt2pl", "pl2pl"):
            a, b = getattr(base, name), getattr(moved, name)
            np.testing.assert_array_equal(a.sources, b.sources)
            np.testing.assert_array_equal(a.targets, b.targets)
            np.testing.assert_allclose(encode_rel_input(b.rel), encode_rel_input(a.rel), atol=1e-9)
        np.testing.assert_allclose(moved.point_features, base.point_features, atol=1e-9)


def test_knn_covers_all_map_points(tiny_scene):
    pt2pt, _, _, _ = build_map_edges(tiny_scene, 3)
    assert len(pt2pt) == 9 * 3
    # lane points couple to the boundaries beside them
    assert (3, 0) in pt2pt.pairs() or (6, 0) in pt2pt.pairs()


def test_build_map_edges_rejects_k_zero(tiny_scene):
    with pytest.raises(InvalidArgumentError):
        build_map_edges(tiny_scene, 0)


def test_zero_rounds_is_the_raw_embedding(encoder, tiny_scene):
    graph = build_map_graph(tiny_scene, 3)
    _, x_pl = encoder.encode_raw_map(graph)
    torch.testing.assert_close(run_map_encoder(encoder, graph, rounds=0), x_pl, atol=0, rtol=0)


def test_lone_polygon_lane_graph_stage_is_residual(encoder):
    graph = build_map_graph(_map_scene(_polygon("solo", [(0.0, 0.0), (3.0, 0.0), (6.0, 1.0)])), 2)
    x_pt, x_pl = encoder.encode_raw_map(graph)
    r = encoder.encode_edges(graph)
    x_pt = encoder.pt2pt_attn(x_pt, graph.pt2pt.edge_index(), r["pt2pt"])
    x_pl = encoder.pt2pl_attn((x_pt, x_pl), graph.pt2pl.edge_index(), r["pt2pl"])
    expected = x_pl + encoder.pl2pl_attn.ff(encoder.pl2pl_attn.norm_ff(x_pl))
    torch.testing.assert_close(run_map_encoder(encoder, graph, rounds=1), expected, atol=1e-12, rtol=0)


def test_disconnected_mirrored_submaps_match(encoder, mirrored_scene):
    x_map = run_map_encoder(encoder, build_map_graph(mirrored_scene, 3), rounds=2)
    torch.testing.assert_close(x_map[:3], x_map[3:], atol=1e-9, rtol=0)


def test_map_without_polygons(encoder):
    graph = build_map_graph(_map_scene(), 3)
    x_map = run_map_encoder(encoder, graph)
    assert x_map.shape == (0, encoder.polygon_mlp.out_dim)
