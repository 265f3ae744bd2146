"""
Procedural desk-scale driving scenes: parallel straight or arc lanes split into
consecutive segments, their boundaries, an optional crosswalk and optional road
edges, with agents following the lanes.
"""
import logging
import math
import numpy as np
from typing import Optional
from lanet.config import GeneratorSpec
from lanet.core.domain.geometry import Pose2
from lanet.core.domain.scene import (
    AgentState,
    AgentTrack,
    AgentType,
    LaneType,
    MapPolygon,
    PolygonEdge,
    PolygonKind,
    Relation,
    Scene,
    polyline_headings,
)
from lanet.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

_OTHER_TYPES = [AgentType.VEHICLE, AgentType.BUS, AgentType.CYCLIST, AgentType.MOTORCYCLIST, AgentType.PEDESTRIAN, AgentType.OTHER]
_OTHER_WEIGHTS = np.array([0.6, 0.1, 0.1, 0.1, 0.05, 0.05])
_LATERAL_MARGIN = 0.25


class _Road:
    """
    Reference curve c(s) with tangent angle phi(s) = heading0 + curvature * s;
    lateral offsets are taken along the left normal.
    """

    def __init__(self, x0: float, y0: float, heading0: float, curvature: float):
        self.x0, self.y0 = x0, y0
        self.heading0 = heading0
        self.curvature = curvature

    def tangent(self, s: np.ndarray) -> np.ndarray:
        return self.heading0 + self.curvature * np.asarray(s, dtype=float)

    def xy(self, s: np.ndarray, offset: float | np.ndarray = 0.0) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        k = self.curvature
        if k == 0.0:
            cx = self.x0 + s * math.cos(self.heading0)
            cy = self.y0 + s * math.sin(self.heading0)
        else:
            phi = self.tangent(s)
            cx = self.x0 + (np.sin(phi) - math.sin(self.heading0)) / k
            cy = self.y0 - (np.cos(phi) - math.cos(self.heading0)) / k
        phi = self.tangent(s)
        return np.stack([cx - offset * np.sin(phi), cy + offset * np.cos(phi)], axis=-1)


def _polygon(pid: str, kind: PolygonKind, xy: np.ndarray, semantic: LaneType, parent: Optional[str] = None) -> MapPolygon:
    headings = polyline_headings(xy)
    points = [Pose2(x=float(x), y=float(y), heading=float(h)) for (x, y), h in zip(xy, headings)]
    return MapPolygon(polygon_id=pid, kind=kind, points=points, semantic=semantic, parent_id=parent)


def _check_feasible(spec: GeneratorSpec) -> float:
    p = spec.problem
    if p.points_per_polyline < 2:
        raise InvalidArgumentError("points_per_polyline must be >= 2 for synthetic polygons")
    if not math.isfinite(spec.max_curvature):
        raise InvalidArgumentError("max_curvature must be finite")
    reach = (spec.num_lanes - 0.5) * spec.lane_width + spec.road_edge_margin
    if spec.max_curvature * reach >= 0.5:
        raise InvalidArgumentError(f"curvature bound {spec.max_curvature} is too tight for a road {reach:.2f} m wide")
    # worst case reference-arc rate for an agent on the outer side of a curve
    max_rate = spec.max_speed / (1.0 - spec.max_curvature * reach)
    travel = max_rate * (p.total_steps - 1) * p.step_period
    total = spec.segment_length * spec.segments_per_lane
    if travel >= total:
        raise InvalidArgumentError(f"road length {total:.1f} m cannot hold a {travel:.1f} m trajectory")
    return total


def synthesize_scene(seed: int, spec: GeneratorSpec, scenario_id: Optional[str] = None) -> Scene:
    total_length = _check_feasible(spec)
    rng = np.random.default_rng(seed)
    p = spec.problem
    F = p.points_per_polyline
    w = spec.lane_width

    heading0 = float(rng.uniform(-math.pi, math.pi))
    curvature = float(rng.uniform(-spec.max_curvature, spec.max_curvature)) if spec.max_curvature > 0 else 0.0
    road = _Road(0.0, 0.0, heading0, curvature)

    polygons: list[MapPolygon] = []
    adjacency: list[PolygonEdge] = []
    center_index: dict[tuple[int, int], int] = {}

    for lane in range(spec.num_lanes):
        d = lane * w
        for seg in range(spec.segments_per_lane):
            s = seg * spec.segment_length + np.linspace(0.0, spec.segment_length, F)
            cid = f"lane{lane}_seg{seg}"
            center_index[(lane, seg)] = len(polygons)
            polygons.append(_polygon(cid, PolygonKind.LANE_CENTERLINE, road.xy(s, d), LaneType.VEHICLE))
            for side, off in (("left", d + w / 2), ("right", d - w / 2)):
                adjacency.append(PolygonEdge(source=len(polygons), target=center_index[(lane, seg)], relation=Relation.BOUNDARY_OF))
                polygons.append(_polygon(f"{cid}_{side}", PolygonKind.LANE_BOUNDARY, road.xy(s, off), LaneType.VEHICLE, cid))

    for (lane, seg), ci in center_index.items():
        nxt = center_index.get((lane, seg + 1))
        if nxt is not None:
            adjacency.append(PolygonEdge(source=ci, target=nxt, relation=Relation.SUCCESSOR))
            adjacency.append(PolygonEdge(source=nxt, target=ci, relation=Relation.PREDECESSOR))
        left = center_index.get((lane + 1, seg))
        if left is not None:
            adjacency.append(PolygonEdge(source=ci, target=left, relation=Relation.LEFT_NEIGHBOR))
            adjacency.append(PolygonEdge(source=left, target=ci, relation=Relation.RIGHT_NEIGHBOR))

    inner = -w / 2 - spec.road_edge_margin
    outer = (spec.num_lanes - 1) * w + w / 2 + spec.road_edge_margin

    if rng.uniform() < spec.crosswalk_probability:
        s_c = float(rng.uniform(0.2, 0.8) * total_length)
        offsets = np.linspace(inner, outer, F)
        xy = np.stack([road.xy(np.array([s_c]), o)[0] for o in offsets])
        cw = len(polygons)
        polygons.append(_polygon("crosswalk0", PolygonKind.CROSSWALK, xy, LaneType.PEDESTRIAN))
        seg = min(int(s_c // spec.segment_length), spec.segments_per_lane - 1)
        for lane in range(spec.num_lanes):
            adjacency.append(PolygonEdge(source=cw, target=center_index[(lane, seg)], relation=Relation.CROSSING))

    if spec.road_edges:
        for seg in range(spec.segments_per_lane):
            s = seg * spec.segment_length + np.linspace(0.0, spec.segment_length, F)
            for side, off, lane in (("left", outer, spec.num_lanes - 1), ("right", inner, 0)):
                adjacency.append(PolygonEdge(source=len(polygons), target=center_index[(lane, seg)], relation=Relation.BOUNDARY_OF))
                polygons.append(_polygon(f"road_edge_{side}_seg{seg}", PolygonKind.ROAD_EDGE, road.xy(s, off), LaneType.UNKNOWN))

    agents = _sample_agents(rng, spec, road, total_length)
    scene = Scene(
        scenario_id=scenario_id or f"synth-{seed:08d}",
        config=p,
        agents=agents,
        polygons=polygons,
        pl_adjacency=adjacency,
    )
    logger.debug(f"Synthesized {scene.scenario_id}: {len(agents)} agents, {len(polygons)} polygons, curvature={curvature:.4f}")
    return scene


def _sample_agents(rng: np.random.Generator, spec: GeneratorSpec, road: _Road, total_length: float) -> list[AgentTrack]:
    p = spec.problem
    n_steps = p.total_steps
    w = spec.lane_width
    bound = max(w / 2 - _LATERAL_MARGIN, w / 4)
    count = int(rng.integers(spec.min_agents, spec.max_agents + 1))

    agents = []
    for i in range(count):
        lane = int(rng.integers(spec.num_lanes))
        lateral = float(np.clip(rng.normal(0.0, spec.lateral_noise), -bound, bound)) if spec.lateral_noise > 0 else 0.0
        offset = lane * w + lateral
        speed = float(rng.uniform(spec.min_speed, spec.max_speed))
        stretch = 1.0 - road.curvature * offset
        rate = speed / stretch
        span = rate * (n_steps - 1) * p.step_period
        s0 = float(rng.uniform(0.0, total_length - span))
        s = s0 + rate * p.step_period * np.arange(n_steps)

        # per-step wobble about the lane; capped so the future never outruns max_speed
        offsets = np.full(n_steps, offset)
        if spec.step_jitter > 0:
            cap = min(3.0 * spec.step_jitter, (spec.max_speed - speed) * p.future_steps * p.step_period / 2.0)
            jitter = np.clip(rng.normal(0.0, spec.step_jitter, size=n_steps), -cap, cap)
            offsets = lane * w + np.clip(lateral + jitter, -bound, bound)

        xy = road.xy(s, offsets)
        heading = road.tangent(s)
        states = [
            AgentState(pose=Pose2(x=float(x), y=float(y), heading=float(h)), velocity=speed)
            for (x, y), h in zip(xy, heading)
        ]

        is_target = i < spec.num_targets
        valid = np.ones(n_steps, dtype=bool)
        if spec.observation_dropout > 0:
            drop = rng.uniform(size=p.history_steps - 1) < spec.observation_dropout
            valid[: p.history_steps - 1] &= ~drop

        agent_type = AgentType.VEHICLE if is_target else _OTHER_TYPES[int(rng.choice(len(_OTHER_TYPES), p=_OTHER_WEIGHTS))]
        agents.append(
            AgentTrack(
                agent_id=f"agent{i}",
                agent_type=agent_type,
                states=states,
                valid=valid.tolist(),
                is_target=is_target,
            )
        )
    return agents


def synthesize_corpus(seed: int, spec: GeneratorSpec, count: int) -> list[Scene]:
    if count < 0:
        raise InvalidArgumentError(f"count must be >= 0, got {count}")
    scenes = []
    for i in range(count):
        child = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        scenes.append(synthesize_scene(child, spec, scenario_id=f"synth-{seed}-{i:04d}"))
    return scenes
