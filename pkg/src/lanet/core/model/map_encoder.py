"""
Vector-map encoder: point-level KNN attention, polygon-from-point attention and
polygon-to-polygon attention over the lane graph, repeated with shared weights.
"""
from __future__ import annotations
import logging
import numpy as np
import torch
import torch.nn as nn
from dataclasses import dataclass
from typing import Optional
from lanet.config import ModelConfig
from lanet.core.domain.geometry import EdgeList, knn_graph, rel_features
from lanet.core.domain.scene import LANE_TYPES, POLYGON_KINDS, RELATIONS, Scene
from lanet.core.nn.layers import MLP, EdgeAttention, embedding_lookup, rel_input
from lanet.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

POINT_FEATURE_DIM = 3
POLYGON_FEATURE_DIM = 1


@dataclass(frozen=True)
class MapGraph:
    """
    Raw map features and typed edge sets, indices into points (P) and polygons (M).

    pt2pt: point -> point KNN; pt2pl: point -> owning polygon; pl2pl: lane graph.
    """
    point_poses: np.ndarray
    point_polygon: np.ndarray
    point_features: np.ndarray
    point_kind: np.ndarray
    point_semantic: np.ndarray
    anchor_poses: np.ndarray
    polygon_features: np.ndarray
    polygon_kind: np.ndarray
    polygon_semantic: np.ndarray
    pt2pt: EdgeList
    pt2pl: EdgeList
    pl2pl: EdgeList
    pl2pl_relation: np.ndarray

    @property
    def num_points(self) -> int:
        return len(self.point_poses)

    @property
    def num_polygons(self) -> int:
        return len(self.anchor_poses)


def build_map_edges(scene: Scene, k: int) -> tuple[EdgeList, EdgeList, EdgeList, np.ndarray]:
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    poses = [p.pose_array() for p in scene.polygons]
    if poses:
        points = np.concatenate(poses)
        owner = np.concatenate([np.full(len(p), i) for i, p in enumerate(poses)])
        anchors = np.stack([p[0] for p in poses])
    else:
        points = np.zeros((0, 3))
        owner = np.zeros(0, dtype=np.int64)
        anchors = np.zeros((0, 3))

    pt2pt = knn_graph(points, k) if len(points) >= 2 else EdgeList.empty()

    pt_ids = np.arange(len(points))
    pt2pl = EdgeList(pt_ids, owner, rel_features(points, anchors[owner], 0))

    src = np.array([e.source for e in scene.pl_adjacency], dtype=np.int64)
    dst = np.array([e.target for e in scene.pl_adjacency], dtype=np.int64)
    relation = np.array([RELATIONS.index(e.relation) for e in scene.pl_adjacency], dtype=np.int64)
    pl2pl = EdgeList(src, dst, rel_features(anchors[src], anchors[dst], 0))
    return pt2pt, pt2pl, pl2pl, relation


def build_map_graph(scene: Scene, k: int) -> MapGraph:
    pt2pt, pt2pl, pl2pl, relation = build_map_edges(scene, k)

    point_rows, kinds, semantics, arc = [], [], [], []
    for poly in scene.polygons:
        pose = poly.pose_array()
        seg = np.zeros(len(pose))
        seg[:-1] = np.hypot(*np.diff(pose[:, :2], axis=0).T)
        tangent = pose[:, 2] - poly.anchor.heading
        point_rows.append(np.stack([seg, np.cos(tangent), np.sin(tangent)], axis=-1))
        kinds.append(POLYGON_KINDS.index(poly.kind))
        semantics.append(LANE_TYPES.index(poly.semantic))
        arc.append(seg.sum())

    counts = [len(p.points) for p in scene.polygons]
    kinds = np.asarray(kinds, dtype=np.int64)
    semantics = np.asarray(semantics, dtype=np.int64)
    graph = MapGraph(
        point_poses=np.concatenate([p.pose_array() for p in scene.polygons]) if counts else np.zeros((0, 3)),
        point_polygon=pt2pl.targets,
        point_features=np.concatenate(point_rows) if counts else np.zeros((0, POINT_FEATURE_DIM)),
        point_kind=np.repeat(kinds, counts),
        point_semantic=np.repeat(semantics, counts),
        anchor_poses=np.stack([p.anchor.as_array() for p in scene.polygons]) if counts else np.zeros((0, 3)),
        polygon_features=np.asarray(arc, dtype=float).reshape(-1, POLYGON_FEATURE_DIM),
        polygon_kind=kinds,
        polygon_semantic=semantics,
        pt2pt=pt2pt,
        pt2pl=pt2pl,
        pl2pl=pl2pl,
        pl2pl_relation=relation,
    )
    logger.debug(
        f"Map graph {scene.scenario_id}: {graph.num_points} points, {graph.num_polygons} polygons, "
        f"{len(pt2pt)} pt2pt / {len(pt2pl)} pt2pl / {len(pl2pl)} pl2pl edges"
    )
    return graph


@dataclass
class MapEncoding:
    x_pt: torch.Tensor
    x_map: torch.Tensor


class MapEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.hidden_dim
        self.rounds = config.map_rounds
        self.point_kind = nn.Embedding(len(POLYGON_KINDS), d)
        self.point_semantic = nn.Embedding(len(LANE_TYPES), d)
        self.polygon_kind = nn.Embedding(len(POLYGON_KINDS), d)
        self.polygon_semantic = nn.Embedding(len(LANE_TYPES), d)
        self.relation = nn.Embedding(len(RELATIONS), d)
        self.point_mlp = MLP([POINT_FEATURE_DIM + 2 * d, d, d])
        self.polygon_mlp = MLP([POLYGON_FEATURE_DIM + 2 * d, d, d])

        self.r_pt2pt = MLP([6, d, d])
        self.r_pt2pl = MLP([6, d, d])
        self.r_pl2pl = MLP([6 + d, d, d])

        self.pt2pt_attn = EdgeAttention(d, config.num_heads)
        self.pt2pl_attn = EdgeAttention(d, config.num_heads, bipartite=True)
        self.pl2pl_attn = EdgeAttention(d, config.num_heads)

    def _dtype(self) -> torch.dtype:
        return self.point_mlp.layers[0].weight.dtype

    def encode_raw_map(self, graph: MapGraph) -> tuple[torch.Tensor, torch.Tensor]:
        dtype = self._dtype()
        pt_in = torch.cat(
            [
                torch.as_tensor(graph.point_features, dtype=dtype),
                embedding_lookup(self.point_kind, torch.as_tensor(graph.point_kind)),
                embedding_lookup(self.point_semantic, torch.as_tensor(graph.point_semantic)),
            ],
            dim=-1,
        )
        pl_in = torch.cat(
            [
                torch.as_tensor(graph.polygon_features, dtype=dtype),
                embedding_lookup(self.polygon_kind, torch.as_tensor(graph.polygon_kind)),
                embedding_lookup(self.polygon_semantic, torch.as_tensor(graph.polygon_semantic)),
            ],
            dim=-1,
        )
        return self.point_mlp(pt_in), self.polygon_mlp(pl_in)

    def encode_edges(self, graph: MapGraph) -> dict[str, torch.Tensor]:
        dtype = self._dtype()
        relation = embedding_lookup(self.relation, torch.as_tensor(graph.pl2pl_relation))
        return {
            "pt2pt": self.r_pt2pt(rel_input(graph.pt2pt, dtype)),
            "pt2pl": self.r_pt2pl(rel_input(graph.pt2pl, dtype)),
            "pl2pl": self.r_pl2pl(torch.cat([rel_input(graph.pl2pl, dtype), relation], dim=-1)),
        }

    def forward(self, graph: MapGraph, rounds: Optional[int] = None) -> MapEncoding:
        rounds = self.rounds if rounds is None else rounds
        x_pt, x_pl = self.encode_raw_map(graph)
        if rounds == 0 or graph.num_polygons == 0:
            return MapEncoding(x_pt, x_pl)

        r = self.encode_edges(graph)
        pt2pt, pt2pl, pl2pl = graph.pt2pt.edge_index(), graph.pt2pl.edge_index(), graph.pl2pl.edge_index()
        for _ in range(rounds):
            x_pt = self.pt2pt_attn(x_pt, pt2pt, r["pt2pt"])
            x_pl = self.pt2pl_attn((x_pt, x_pl), pt2pl, r["pt2pl"])
            x_pl = self.pl2pl_attn(x_pl, pl2pl, r["pl2pl"])
        return MapEncoding(x_pt, x_pl)


def run_map_encoder(encoder: MapEncoder, graph: MapGraph, rounds: Optional[int] = None) -> torch.Tensor:
    return encoder(graph, rounds).x_map
