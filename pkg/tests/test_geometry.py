import math
import numpy as np
import pytest
from lanet.core.domain.geometry import (
    EdgeList,
    Pose2,
    Rigid2,
    encode_rel_input,
    knn_graph,
    radius_graph,
    rel_feature,
    rel_features,
    wrap_angle,
)
from lanet.errors import InvalidArgumentError


@pytest.mark.parametrize(
    "angle, expected",
    [(0.0, 0.0), (3 * math.pi, math.pi), (-3 * math.pi / 2, math.pi / 2), (-math.pi, math.pi), (math.pi, math.pi)],
)
def test_wrap_angle_examples(angle, expected):
    assert wrap_angle(angle) == pytest.approx(expected, abs=1e-12)


def test_wrap_angle_is_idempotent_and_in_range(rng):
    a = rng.uniform(-50, 50, size=1000)
    w = wrap_angle(a)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    np.testing.assert_allclose(wrap_angle(w), w, atol=1e-12)
    np.testing.assert_allclose(np.cos(w), np.cos(a), atol=1e-9)
    np.testing.assert_allclose(np.sin(w), np.sin(a), atol=1e-9)


def test_wrap_angle_just_above_pi_stays_in_range():
    w = wrap_angle(math.pi + 4.44e-16)
    assert -math.pi < w <= math.pi
    assert math.cos(w) == pytest.approx(-1.0)
    assert Pose2(x=0, y=0, heading=math.pi + 4.44e-16).heading > -math.pi


def test_wrap_angle_rounding_to_minus_pi_maps_to_pi():
    tiny = np.array([-1e-17, -2.0 * math.pi - 1e-16, 3.0 * math.pi + 4.44e-16])
    w = wrap_angle(tiny - math.pi)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)


def test_wrap_angle_leaves_in_range_values_untouched(rng):
    a = rng.uniform(-math.pi, math.pi, size=10_000)
    a = a[a > -math.pi]
    w = wrap_angle(a)
    assert np.array_equal(w, a)
    assert all(wrap_angle(float(x)) == float(x) for x in a[:500])
    assert wrap_angle(math.pi) == math.pi


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_wrap_angle_rejects_non_finite(bad):
    with pytest.raises(InvalidArgumentError):
        wrap_angle(bad)


def test_pose_heading_is_wrapped():
    assert Pose2(x=0, y=0, heading=3 * math.pi).heading == pytest.approx(math.pi)


def test_rel_feature_identity():
    p = Pose2(x=1.5, y=-2.0, heading=0.3)
    assert tuple(rel_feature(p, p, 0)) == (0.0, 0.0, 0.0, 0)


def test_rel_feature_3_4_5():
    r = rel_feature(Pose2(x=0, y=0, heading=0), Pose2(x=3, y=4, heading=math.pi / 2), 0)
    assert r.distance == pytest.approx(5.0)
    assert r.orientation_diff == pytest.approx(math.pi / 2)
    assert r.bearing == pytest.approx(math.atan2(4, 3))
    assert r.time_gap == 0


def test_rel_feature_matches_direct_formula(rng):
    for _ in range(50):
        sx, sy, dx, dy = rng.uniform(-20, 20, size=4)
        sh, dh = rng.uniform(-math.pi, math.pi, size=2)
        dt = int(rng.integers(0, 5))
        r = rel_feature(Pose2(x=sx, y=sy, heading=sh), Pose2(x=dx, y=dy, heading=dh), dt)
        src_h, dst_h = wrap_angle(sh), wrap_angle(dh)
        assert r.distance == pytest.approx(np.hypot(dx - sx, dy - sy))
        assert r.orientation_diff == pytest.approx(wrap_angle(dst_h - src_h), abs=1e-12)
        assert r.bearing == pytest.approx(wrap_angle(np.arctan2(dy - sy, dx - sx) - src_h), abs=1e-12)
        assert r.time_gap == dt


def test_rel_features_rigid_invariant(rng, random_rigid):
    src = np.column_stack([rng.uniform(-30, 30, (40, 2)), rng.uniform(-math.pi, math.pi, 40)])
    dst = np.column_stack([rng.uniform(-30, 30, (40, 2)), rng.uniform(-math.pi, math.pi, 40)])
    base = encode_rel_input(rel_features(src, dst, 2))
    for _ in range(10):
        g = random_rigid(rng)
        moved = encode_rel_input(rel_features(g.apply_poses(src), g.apply_poses(dst), 2))
        np.testing.assert_allclose(moved, base, atol=1e-9)


def test_rel_features_rejects_negative_gap():
    with pytest.raises(InvalidArgumentError):
        rel_features(np.zeros((1, 3)), np.ones((1, 3)), -1)


def test_knn_nearest_is_unambiguous():
    points = [Pose2(x=0, y=0), Pose2(x=1, y=0), Pose2(x=5, y=0)]
    e = knn_graph(points, 1)
    assert {(s, t) for s, t in e.pairs() if t == 0} == {(1, 0)}
    assert len(e) == 3


def test_knn_saturates_to_complete_graph():
    points = [Pose2(x=float(i), y=float(i * i)) for i in range(5)]
    e = knn_graph(points, 10)
    assert e.pairs() == {(s, t) for s in range(5) for t in range(5) if s != t}


def test_knn_ties_break_by_lower_index():
    # node 1 has neighbours 0 and 2 at equal distance
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    e = knn_graph(points, 1)
    assert (0, 1) in e.pairs() and (2, 1) not in e.pairs()


@pytest.mark.parametrize("k, n", [(0, 3), (1, 1)])
def test_knn_rejects_bad_arguments(k, n):
    with pytest.raises(InvalidArgumentError):
        knn_graph(np.zeros((n, 3)) + np.arange(n)[:, None], k)


def _knn_oracle(pts: np.ndarray, k: int) -> set[tuple[int, int]]:
    n = len(pts)
    edges = set()
    for t in range(n):
        cands = sorted((float(np.hypot(*(pts[s, :2] - pts[t, :2]))), s) for s in range(n) if s != t)
        edges.update((s, t) for _, s in cands[: min(k, n - 1)])
    return edges


def test_knn_matches_sort_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(2, 15))
        k = int(rng.integers(1, 9))
        pts = np.column_stack([rng.uniform(-10, 10, (n, 2)), rng.uniform(-math.pi, math.pi, n)])
        e = knn_graph(pts, k)
        assert e.pairs() == _knn_oracle(pts, k)
        assert len(e) == n * min(k, n - 1)


def test_knn_is_deterministic(rng):
    pts = np.column_stack([rng.uniform(-10, 10, (12, 2)), np.zeros(12)])
    a, b = knn_graph(pts, 4), knn_graph(pts, 4)
    np.testing.assert_array_equal(a.sources, b.sources)
    np.testing.assert_array_equal(a.targets, b.targets)


def test_radius_coincident_points_give_complete_bipartite():
    src = [Pose2(x=1, y=1)] * 3
    dst = [Pose2(x=1, y=1)] * 2
    e = radius_graph(src, dst, 0.5)
    assert e.pairs() == {(s, t) for s in range(3) for t in range(2)}
    np.testing.assert_array_equal(e.rel[:, 0], 0.0)
    np.testing.assert_array_equal(e.rel[:, 2], 0.0)


def test_radius_mask_removes_incident_edges():
    pts = np.zeros((4, 3))
    mask = np.array([True, False, True, True])
    e = radius_graph(pts, pts, 1.0, mask)
    assert all(1 not in pair for pair in e.pairs())


def test_radius_rejects_non_positive_radius():
    with pytest.raises(InvalidArgumentError):
        radius_graph(np.zeros((1, 3)), np.zeros((1, 3)), 0.0)


def test_radius_matches_all_pairs_oracle(rng):
    for _ in range(100):
        n, m = int(rng.integers(1, 12)), int(rng.integers(1, 12))
        src = np.column_stack([rng.uniform(-10, 10, (n, 2)), rng.uniform(-math.pi, math.pi, n)])
        dst = np.column_stack([rng.uniform(-10, 10, (m, 2)), rng.uniform(-math.pi, math.pi, m)])
        sm, dm = rng.uniform(size=n) < 0.8, rng.uniform(size=m) < 0.8
        radius = float(rng.uniform(0.5, 10))
        e = radius_graph(src, dst, radius, (sm, dm))
        oracle = {
            (s, t)
            for s in range(n)
            for t in range(m)
            if sm[s] and dm[t] and math.hypot(*(src[s, :2] - dst[t, :2])) <= radius
        }
        assert e.pairs() == oracle


def test_radius_without_self_loops():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    e = radius_graph(pts, pts, 5.0, allow_self_loops=False)
    assert e.pairs() == {(0, 1), (1, 0)}


def test_edge_list_rejects_misaligned_sequences():
    with pytest.raises(InvalidArgumentError):
        EdgeList(np.array([0, 1]), np.array([1]), np.zeros((2, 4)))


def test_edge_list_select_keeps_features_aligned():
    e = EdgeList(np.array([0, 1, 2]), np.array([1, 2, 0]), np.arange(12.0).reshape(3, 4))
    kept = e.select(np.array([True, False, True]))
    np.testing.assert_array_equal(kept.sources, [0, 2])
    np.testing.assert_array_equal(kept.rel[1], [8.0, 9.0, 10.0, 11.0])


def test_rigid_apply_rotates_heading():
    g = Rigid2(angle=math.pi / 2, tx=1.0, ty=0.0)
    p = g.apply(Pose2(x=1.0, y=0.0, heading=0.0))
    assert (p.x, p.y, p.heading) == pytest.approx((1.0, 1.0, math.pi / 2))
