"""
Scene data model: agents with timestamped state histories plus a vectorised map
of typed polygons and their adjacency.
"""
from __future__ import annotations
import logging
import math
import numpy as np
from dataclasses import dataclass
from enum import Enum
from typing import Optional
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from lanet.config import ProblemConfig
from lanet.core.domain.geometry import Pose2, Rigid2, wrap_angle

logger = logging.getLogger(__name__)

HEADING_TOLERANCE = 1e-6


class AgentType(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"
    BUS = "bus"
    MOTORCYCLIST = "motorcyclist"
    OTHER = "other"


class PolygonKind(str, Enum):
    LANE_CENTERLINE = "lane_centerline"
    LANE_BOUNDARY = "lane_boundary"
    CROSSWALK = "crosswalk"
    ROAD_EDGE = "road_edge"


class LaneType(str, Enum):
    VEHICLE = "vehicle"
    BIKE = "bike"
    BUS = "bus"
    PEDESTRIAN = "pedestrian"
    UNKNOWN = "unknown"


class Relation(str, Enum):
    PREDECESSOR = "predecessor"
    SUCCESSOR = "successor"
    LEFT_NEIGHBOR = "left_neighbor"
    RIGHT_NEIGHBOR = "right_neighbor"
    BOUNDARY_OF = "boundary_of"
    CROSSING = "crossing"


AGENT_TYPES = list(AgentType)
POLYGON_KINDS = list(PolygonKind)
LANE_TYPES = list(LaneType)
RELATIONS = list(Relation)


def polyline_headings(xy: np.ndarray) -> np.ndarray:
    """
    Point headings as consecutive-point chord directions; the last point repeats
    the previous chord.
    """
    xy = np.asarray(xy, dtype=float)
    d = np.diff(xy, axis=0)
    chords = np.arctan2(d[:, 1], d[:, 0])
    return wrap_angle(np.concatenate([chords, chords[-1:]]))


class AgentState(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    pose: Pose2
    velocity: float = Field(ge=0)

    @field_validator("velocity")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("velocity must be finite")
        return v


class AgentTrack(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    agent_id: str
    agent_type: AgentType
    states: list[AgentState]
    valid: list[bool]
    is_target: bool = False

    @model_validator(mode="after")
    def _aligned(self) -> "AgentTrack":
        if len(self.states) != len(self.valid):
            raise ValueError(f"states ({len(self.states)}) and valid ({len(self.valid)}) differ in length")
        return self

    def pose_array(self) -> np.ndarray:
        return np.stack([s.pose.as_array() for s in self.states])

    def velocity_array(self) -> np.ndarray:
        return np.array([s.velocity for s in self.states], dtype=float)

    def valid_array(self) -> np.ndarray:
        return np.asarray(self.valid, dtype=bool)


class MapPolygon(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    polygon_id: str
    kind: PolygonKind
    points: list[Pose2] = Field(min_length=2)
    semantic: LaneType = LaneType.UNKNOWN
    parent_id: Optional[str] = None

    @model_validator(mode="after")
    def _tangents(self) -> "MapPolygon":
        xy = self.xy()
        if np.any(np.all(np.diff(xy, axis=0) == 0, axis=1)):
            raise ValueError(f"polygon {self.polygon_id} has repeated consecutive points")
        expected = polyline_headings(xy)
        got = np.array([p.heading for p in self.points])
        err = np.abs(wrap_angle(got - expected))
        if np.any(err > HEADING_TOLERANCE):
            i = int(np.argmax(err))
            raise ValueError(f"polygon {self.polygon_id} point {i} heading deviates from tangent by {err[i]:.3g} rad")
        return self

    def xy(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points], dtype=float)

    def pose_array(self) -> np.ndarray:
        return np.stack([p.as_array() for p in self.points])

    @property
    def anchor(self) -> Pose2:
        return self.points[0]


class PolygonEdge(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    source: int = Field(ge=0)
    target: int = Field(ge=0)
    relation: Relation


class Scene(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    scenario_id: str
    config: ProblemConfig = Field(default_factory=ProblemConfig)
    agents: list[AgentTrack] = Field(default_factory=list)
    polygons: list[MapPolygon] = Field(default_factory=list)
    pl_adjacency: list[PolygonEdge] = Field(default_factory=list, alias="adjacency")

    @model_validator(mode="after")
    def _invariants(self) -> "Scene":
        n_steps = self.config.total_steps
        h = self.config.history_steps
        for i, agent in enumerate(self.agents):
            if len(agent.states) != n_steps:
                raise ValueError(f"agents.{i} has {len(agent.states)} states, expected H+T={n_steps}")
            if agent.is_target and not any(agent.valid[:h]):
                raise ValueError(f"agents.{i} is a target without a valid observed step")

        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent_id values must be unique")
        pids = [p.polygon_id for p in self.polygons]
        if len(set(pids)) != len(pids):
            raise ValueError("polygon_id values must be unique")

        m = len(self.polygons)
        for i, e in enumerate(self.pl_adjacency):
            if e.source >= m or e.target >= m:
                raise ValueError(f"adjacency.{i} index out of range for {m} polygons")

        index = {pid: i for i, pid in enumerate(pids)}
        linked = {(e.source, e.target) for e in self.pl_adjacency if e.relation == Relation.BOUNDARY_OF}
        for i, poly in enumerate(self.polygons):
            if poly.kind != PolygonKind.LANE_BOUNDARY or poly.parent_id is None:
                continue
            parent = index.get(poly.parent_id)
            if parent is None:
                continue
            if (i, parent) not in linked and (parent, i) not in linked:
                raise ValueError(f"polygons.{i} ({poly.polygon_id}) has no boundary_of edge to its centerline {poly.parent_id}")
        return self

    @property
    def target_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.agents) if a.is_target]


@dataclass(frozen=True)
class AgentFeatures:
    """
    Per observed step: [motion magnitude, cos heading, sin heading, speed].
    """
    features: np.ndarray
    step_mask: np.ndarray
    motion_mask: np.ndarray
    motion_heading: np.ndarray


def agent_feature_tensor(track: AgentTrack, config: ProblemConfig) -> AgentFeatures:
    h = config.history_steps
    poses = track.pose_array()[:h]
    speed = track.velocity_array()[:h]
    valid = track.valid_array()[:h]

    step = np.zeros((h, 2))
    step[1:] = poses[1:, :2] - poses[:-1, :2]
    has_pred = np.zeros(h, dtype=bool)
    has_pred[0] = True
    has_pred[1:] = valid[:-1]
    motion_mask = valid & has_pred
    step[~motion_mask] = 0.0

    magnitude = np.hypot(step[:, 0], step[:, 1])
    motion_heading = np.where(magnitude > 0, np.arctan2(step[:, 1], step[:, 0]), poses[:, 2])

    features = np.stack([magnitude, np.cos(poses[:, 2]), np.sin(poses[:, 2]), speed], axis=-1)
    features[~valid] = 0.0
    return AgentFeatures(features=features, step_mask=valid, motion_mask=motion_mask, motion_heading=motion_heading)


def transform_scene(scene: Scene, rigid: Rigid2) -> Scene:
    agents = []
    for a in scene.agents:
        states = [AgentState(pose=rigid.apply(s.pose), velocity=s.velocity) for s in a.states]
        agents.append(a.model_copy(update={"states": states}))
    polygons = []
    for p in scene.polygons:
        polygons.append(p.model_copy(update={"points": [rigid.apply(q) for q in p.points]}))
    return scene.model_copy(update={"agents": agents, "polygons": polygons})
