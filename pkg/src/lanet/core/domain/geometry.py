"""
Planar poses, angle arithmetic, rigid transforms and the spatial graph
constructors (KNN and radius search) used by every encoder.
"""
from __future__ import annotations
import math
import numpy as np
import torch
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.spatial.distance import cdist
from lanet.errors import InvalidArgumentError

TWO_PI = 2.0 * math.pi
REL_DIM = 4
REL_INPUT_DIM = 6
# distances are compared at nanometre resolution so mirrored layouts tie exactly
_DIST_DECIMALS = 9


def wrap_angle(a):
    """
    Wrap an angle (float or ndarray) into (-pi, pi]. Values already in range
    come back bit-identical.
    """
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"wrap_angle expects finite input, got {a!r}")
    wrapped = np.remainder(arr + math.pi, TWO_PI) - math.pi
    # rounding can land exactly on -pi
    wrapped = np.where(wrapped <= -math.pi, math.pi, wrapped)
    out = np.where((arr > -math.pi) & (arr <= math.pi), arr, wrapped)
    if out.ndim == 0:
        return float(out)
    return out


def wrap_angle_tensor(a: torch.Tensor) -> torch.Tensor:
    wrapped = torch.remainder(a + math.pi, TWO_PI) - math.pi
    wrapped = torch.where(wrapped <= -math.pi, wrapped + TWO_PI, wrapped)
    return torch.where((a > -math.pi) & (a <= math.pi), a, wrapped)


class Pose2(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    x: float
    y: float
    heading: float = 0.0

    @field_validator("x", "y")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("coordinate must be finite")
        return v

    @field_validator("heading")
    @classmethod
    def _wrap(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("heading must be finite")
        return wrap_angle(v)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading], dtype=float)


class RelFeature(NamedTuple):
    distance: float
    orientation_diff: float
    bearing: float
    time_gap: int


PoseLike = Union[Sequence[Pose2], np.ndarray]


def as_pose_array(poses: PoseLike) -> np.ndarray:
    if isinstance(poses, np.ndarray):
        arr = np.asarray(poses, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise InvalidArgumentError(f"Expected an (n, 3) pose array, got shape {arr.shape}")
        return arr
    if len(poses) == 0:
        return np.zeros((0, 3), dtype=float)
    return np.stack([p.as_array() for p in poses])


def rel_features(src: np.ndarray, dst: np.ndarray, dt=0) -> np.ndarray:
    """
    Vectorised relative features for aligned (E, 3) pose arrays.

    Columns: distance, orientation_diff, bearing (direction to dst in the src
    frame, 0 when the poses coincide), time_gap.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if src.shape != dst.shape:
        raise InvalidArgumentError(f"Pose arrays differ in shape: {src.shape} vs {dst.shape}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise InvalidArgumentError("rel_features expects finite poses")
    dx = dst[:, 0] - src[:, 0]
    dy = dst[:, 1] - src[:, 1]
    distance = np.hypot(dx, dy)
    orientation = wrap_angle(dst[:, 2] - src[:, 2]) if len(src) else np.zeros(0)
    bearing = np.where(distance > 0, np.arctan2(dy, dx) - src[:, 2], 0.0)
    bearing = wrap_angle(bearing) if len(src) else np.zeros(0)
    gap = np.broadcast_to(np.asarray(dt, dtype=float), distance.shape)
    if np.any(gap < 0):
        raise InvalidArgumentError("time_gap must be non-negative")
    return np.stack([distance, orientation, bearing, gap], axis=-1).reshape(-1, REL_DIM)


def rel_feature(src: Pose2, dst: Pose2, dt: int = 0) -> RelFeature:
    row = rel_features(src.as_array()[None], dst.as_array()[None], dt)[0]
    return RelFeature(float(row[0]), float(row[1]), float(row[2]), int(dt))


def encode_rel_input(rel: np.ndarray) -> np.ndarray:
    """
    [distance, cos dθ, sin dθ, cos bearing, sin bearing, time_gap] network input.
    """
    rel = np.asarray(rel, dtype=float).reshape(-1, REL_DIM)
    return np.stack(
        [rel[:, 0], np.cos(rel[:, 1]), np.sin(rel[:, 1]), np.cos(rel[:, 2]), np.sin(rel[:, 2]), rel[:, 3]],
        axis=-1,
    )


@dataclass(frozen=True)
class EdgeList:
    sources: np.ndarray
    targets: np.ndarray
    rel: np.ndarray = field(default_factory=lambda: np.zeros((0, REL_DIM)))

    def __post_init__(self):
        src = np.asarray(self.sources, dtype=np.int64).reshape(-1)
        dst = np.asarray(self.targets, dtype=np.int64).reshape(-1)
        rel = np.asarray(self.rel, dtype=float).reshape(-1, REL_DIM)
        if not (len(src) == len(dst) == len(rel)):
            raise InvalidArgumentError(f"EdgeList sequences differ in length: {len(src)}, {len(dst)}, {len(rel)}")
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "targets", dst)
        object.__setattr__(self, "rel", rel)

    @classmethod
    def empty(cls) -> "EdgeList":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros((0, REL_DIM)))

    def __len__(self) -> int:
        return int(self.sources.size)

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.sources.tolist(), self.targets.tolist()))

    def rel_features(self) -> list[RelFeature]:
        return [RelFeature(float(d), float(o), float(b), int(t)) for d, o, b, t in self.rel]

    def select(self, mask: np.ndarray) -> "EdgeList":
        mask = np.asarray(mask, dtype=bool)
        return EdgeList(self.sources[mask], self.targets[mask], self.rel[mask])

    def edge_index(self) -> torch.Tensor:
        return torch.from_numpy(np.stack([self.sources, self.targets])).long()

    def check_range(self, num_sources: int, num_targets: int) -> None:
        if len(self) and (self.sources.min() < 0 or self.sources.max() >= num_sources):
            raise InvalidArgumentError("EdgeList source index out of range")
        if len(self) and (self.targets.min() < 0 or self.targets.max() >= num_targets):
            raise InvalidArgumentError("EdgeList target index out of range")

    @staticmethod
    def concat(parts: Sequence["EdgeList"]) -> "EdgeList":
        parts = [p for p in parts if len(p)]
        if not parts:
            return EdgeList.empty()
        return EdgeList(
            np.concatenate([p.sources for p in parts]),
            np.concatenate([p.targets for p in parts]),
            np.concatenate([p.rel for p in parts]),
        )


def knn_graph(points: PoseLike, k: int) -> EdgeList:
    """
    Directed KNN graph: every node receives edges from its min(k, n-1) nearest
    other nodes. Ties go to the lower node index.
    """
    pts = as_pose_array(points)
    n = len(pts)
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if n < 2:
        raise InvalidArgumentError(f"knn_graph needs at least 2 points, got {n}")

    dist = np.round(cdist(pts[:, :2], pts[:, :2]), _DIST_DECIMALS)
    np.fill_diagonal(dist, np.inf)
    m = min(k, n - 1)
    order = np.argsort(dist, axis=1, kind="stable")[:, :m]

    targets = np.repeat(np.arange(n), m)
    sources = order.reshape(-1)
    rel = rel_features(pts[sources], pts[targets], 0)
    return EdgeList(sources, targets, rel)


def radius_graph(
    sources: PoseLike,
    targets: PoseLike,
    radius: float,
    valid_mask: np.ndarray | tuple[np.ndarray, np.ndarray] | None = None,
    *,
    allow_self_loops: bool = True,
) -> EdgeList:
    """
    All (s, t) pairs with |s - t| <= radius and both endpoints valid.

    ``valid_mask`` is either a pair (source mask, target mask) or a single mask
    when sources and targets are the same node set.
    """
    src = as_pose_array(sources)
    dst = as_pose_array(targets)
    if not radius > 0:
        raise InvalidArgumentError(f"radius must be > 0, got {radius}")

    if valid_mask is None:
        src_valid = np.ones(len(src), dtype=bool)
        dst_valid = np.ones(len(dst), dtype=bool)
    elif isinstance(valid_mask, tuple):
        src_valid, dst_valid = (np.asarray(m, dtype=bool) for m in valid_mask)
    else:
        src_valid = dst_valid = np.asarray(valid_mask, dtype=bool)
    if len(src_valid) != len(src) or len(dst_valid) != len(dst):
        raise InvalidArgumentError("valid_mask length does not match the node sets")

    if len(src) == 0 or len(dst) == 0:
        return EdgeList.empty()

    dist = cdist(src[:, :2], dst[:, :2])
    keep = (dist <= radius) & src_valid[:, None] & dst_valid[None, :]
    if not allow_self_loops:
        if len(src) != len(dst):
            raise InvalidArgumentError("Self-loop exclusion requires identical node sets")
        np.fill_diagonal(keep, False)

    s_idx, t_idx = np.nonzero(keep)
    rel = rel_features(src[s_idx], dst[t_idx], 0)
    return EdgeList(s_idx, t_idx, rel)


@dataclass(frozen=True)
class Rigid2:
    """
    Rotation by ``angle`` about the origin followed by translation (tx, ty).
    """
    angle: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def apply_xy(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        c, s = math.cos(self.angle), math.sin(self.angle)
        x, y = xy[..., 0], xy[..., 1]
        return np.stack([c * x - s * y + self.tx, s * x + c * y + self.ty], axis=-1)

    def apply_poses(self, poses: np.ndarray) -> np.ndarray:
        poses = np.asarray(poses, dtype=float)
        out = np.empty_like(poses)
        out[..., :2] = self.apply_xy(poses[..., :2])
        out[..., 2] = wrap_angle(poses[..., 2] + self.angle)
        return out

    def apply(self, pose: Pose2) -> Pose2:
        x, y, h = self.apply_poses(pose.as_array()[None])[0]
        return Pose2(x=float(x), y=float(y), heading=float(h))


def rotate_xy(xy: torch.Tensor, angle: torch.Tensor) -> torch.Tensor:
    """
    Rotate (..., 2) vectors by per-row angles (broadcast over leading dims).
    """
    c, s = torch.cos(angle), torch.sin(angle)
    x, y = xy[..., 0], xy[..., 1]
    return torch.stack([c * x - s * y, s * x + c * y], dim=-1)
