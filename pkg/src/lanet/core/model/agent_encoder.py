"""
Agent history encoder over (agent, observed step) nodes, id = agent * H + step.

Each round runs temporal attention along each timeline, agent <- map polygon
attention and same-step agent <- agent attention, with its own layers.
"""
from __future__ import annotations
import logging
import numpy as np
import torch
import torch.nn as nn
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional
from lanet.config import ModelConfig
from lanet.core.domain.geometry import EdgeList, radius_graph, rel_features
from lanet.core.domain.scene import AGENT_TYPES, Scene, agent_feature_tensor
from lanet.core.nn.layers import MLP, EdgeAttention, embedding_lookup, rel_input
from lanet.errors import InvalidArgumentError

if TYPE_CHECKING:
    from lanet.core.model.caip import CaipModule, PrunedEdges

logger = logging.getLogger(__name__)

AGENT_FEATURE_DIM = 4


@dataclass(frozen=True)
class AgentGraph:
    """
    features: (A, H, 4) [motion magnitude, heading in the step's motion frame
    (cos, sin), speed]; poses/step_mask: (A, H, 3)/(A, H).
    """
    features: np.ndarray
    agent_type: np.ndarray
    poses: np.ndarray
    step_mask: np.ndarray
    temporal: EdgeList
    agent_map: EdgeList
    agent_agent: EdgeList

    @property
    def num_agents(self) -> int:
        return self.features.shape[0]

    @property
    def num_steps(self) -> int:
        return self.features.shape[1]

    def node_poses(self) -> np.ndarray:
        return self.poses.reshape(-1, 3)


def build_temporal_edges(step_mask: np.ndarray, window: int, poses: Optional[np.ndarray] = None) -> EdgeList:
    """
    Edge s -> t within each agent's timeline iff 0 < t - s <= window and both
    steps are valid. ``step_mask`` is (H,) for a single track or (A, H).
    """
    if window < 1:
        raise InvalidArgumentError(f"window must be >= 1, got {window}")
    mask = np.atleast_2d(np.asarray(step_mask, dtype=bool))
    n_agents, h = mask.shape
    s_idx, t_idx = np.meshgrid(np.arange(h), np.arange(h), indexing="ij")
    gap = t_idx - s_idx
    pair = (gap > 0) & (gap <= window)

    sources, targets, gaps = [], [], []
    for a in range(n_agents):
        keep = pair & mask[a][:, None] & mask[a][None, :]
        s, t = np.nonzero(keep)
        sources.append(a * h + s)
        targets.append(a * h + t)
        gaps.append(t - s)
    sources = np.concatenate(sources) if sources else np.zeros(0, dtype=np.int64)
    targets = np.concatenate(targets) if targets else np.zeros(0, dtype=np.int64)
    gaps = np.concatenate(gaps) if gaps else np.zeros(0, dtype=np.int64)

    if poses is None:
        flat = np.zeros((n_agents * h, 3))
    else:
        flat = np.asarray(poses, dtype=float).reshape(-1, 3)
    return EdgeList(sources, targets, rel_features(flat[sources], flat[targets], gaps))


def build_agent_map_edges(anchor_poses: np.ndarray, poses: np.ndarray, step_mask: np.ndarray, radius: float) -> EdgeList:
    """
    Polygon anchor -> agent step node, for every valid observed step.
    """
    mask = np.asarray(step_mask, dtype=bool).reshape(-1)
    return radius_graph(
        anchor_poses,
        np.asarray(poses, dtype=float).reshape(-1, 3),
        radius,
        (np.ones(len(anchor_poses), dtype=bool), mask),
    )


def build_agent_agent_edges(poses: np.ndarray, step_mask: np.ndarray, radius: float) -> EdgeList:
    """
    Per-step radius graph between distinct valid agents, mapped to node ids.
    """
    poses = np.asarray(poses, dtype=float)
    mask = np.asarray(step_mask, dtype=bool)
    n_agents, h = mask.shape
    if n_agents < 2:
        return EdgeList.empty()
    parts = []
    for t in range(h):
        e = radius_graph(poses[:, t], poses[:, t], radius, mask[:, t], allow_self_loops=False)
        parts.append(EdgeList(e.sources * h + t, e.targets * h + t, e.rel))
    return EdgeList.concat(parts)


def build_agent_graph(scene: Scene, config: ModelConfig, anchor_poses: np.ndarray) -> AgentGraph:
    problem = scene.config
    h = problem.history_steps
    window = config.temporal_window or h

    rows, masks = [], []
    for track in scene.agents:
        f = agent_feature_tensor(track, problem)
        relative = f.features.copy()
        heading = track.pose_array()[:h, 2] - f.motion_heading
        relative[:, 1] = np.cos(heading)
        relative[:, 2] = np.sin(heading)
        relative[~f.step_mask] = 0.0
        rows.append(relative)
        masks.append(f.step_mask)

    n_agents = len(scene.agents)
    features = np.stack(rows) if rows else np.zeros((0, h, AGENT_FEATURE_DIM))
    step_mask = np.stack(masks) if masks else np.zeros((0, h), dtype=bool)
    poses = np.stack([a.pose_array()[:h] for a in scene.agents]) if n_agents else np.zeros((0, h, 3))
    agent_type = np.array([AGENT_TYPES.index(a.agent_type) for a in scene.agents], dtype=np.int64)

    graph = AgentGraph(
        features=features,
        agent_type=agent_type,
        poses=poses,
        step_mask=step_mask,
        temporal=build_temporal_edges(step_mask, window, poses) if n_agents else EdgeList.empty(),
        agent_map=build_agent_map_edges(anchor_poses, poses, step_mask, config.agent_map_radius),
        agent_agent=build_agent_agent_edges(poses, step_mask, config.agent_agent_radius),
    )
    logger.debug(
        f"Agent graph {scene.scenario_id}: {n_agents} agents x {h} steps, {len(graph.temporal)} temporal / "
        f"{len(graph.agent_map)} agent-map / {len(graph.agent_agent)} agent-agent edges"
    )
    return graph


class EncoderRound(nn.Module):
    def __init__(self, hidden_dim: int, num_heads: int):
        super().__init__()
        self.temporal = EdgeAttention(hidden_dim, num_heads)
        self.agent_map = EdgeAttention(hidden_dim, num_heads, bipartite=True)
        self.agent_agent = EdgeAttention(hidden_dim, num_heads)


class AgentEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.hidden_dim
        self.agent_type = nn.Embedding(len(AGENT_TYPES), d)
        self.input_mlp = MLP([AGENT_FEATURE_DIM + d, d, d])
        self.r_t2t = MLP([6, d, d])
        self.r_pl2a = MLP([6, d, d])
        self.r_a2a = MLP([6, d, d])
        self.rounds = nn.ModuleList(EncoderRound(d, config.num_heads) for _ in range(config.encoder_rounds))

    def _dtype(self) -> torch.dtype:
        return self.input_mlp.layers[0].weight.dtype

    def encode_raw_agents(self, graph: AgentGraph) -> torch.Tensor:
        h = graph.num_steps
        feats = torch.as_tensor(graph.features.reshape(-1, AGENT_FEATURE_DIM), dtype=self._dtype())
        types = embedding_lookup(self.agent_type, torch.as_tensor(np.repeat(graph.agent_type, h)))
        return self.input_mlp(torch.cat([feats, types], dim=-1))

    def temporal_attention(self, x_a: torch.Tensor, graph: AgentGraph, layer: int = 0, rel_emb: Optional[torch.Tensor] = None) -> torch.Tensor:
        if rel_emb is None:
            rel_emb = self.r_t2t(rel_input(graph.temporal, x_a.dtype))
        return self.rounds[layer].temporal(x_a, graph.temporal.edge_index(), rel_emb)

    def agent_map_attention(
        self,
        x_map: torch.Tensor,
        x_agent: torch.Tensor,
        graph: AgentGraph,
        layer: int = 0,
        pruned: Optional["PrunedEdges"] = None,
        rel_emb: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        edges = graph.agent_map if pruned is None else pruned.kept_edges
        weight = None if pruned is None else pruned.soft_weights
        if rel_emb is None:
            rel_emb = self.r_pl2a(rel_input(edges, x_agent.dtype))
        return self.rounds[layer].agent_map((x_map, x_agent), edges.edge_index(), rel_emb, weight)

    def agent_agent_attention(self, x_agent: torch.Tensor, graph: AgentGraph, layer: int = 0, rel_emb: Optional[torch.Tensor] = None) -> torch.Tensor:
        if rel_emb is None:
            rel_emb = self.r_a2a(rel_input(graph.agent_agent, x_agent.dtype))
        return self.rounds[layer].agent_agent(x_agent, graph.agent_agent.edge_index(), rel_emb)

    def forward(self, graph: AgentGraph, x_map: torch.Tensor, caip: Optional["CaipModule"] = None) -> torch.Tensor:
        """
        Returns x_agent with shape (A, H, D).
        """
        x = self.encode_raw_agents(graph)
        if graph.num_agents == 0:
            return x.view(0, graph.num_steps, -1)

        pruned = None
        if caip is not None and len(graph.agent_map):
            pruned = caip.prune(graph.agent_map, num_queries=x.size(0))
            logger.debug(f"Encoder interaction pruning kept {pruned.num_kept}/{pruned.num_candidates} agent-map edges")
        map_edges = graph.agent_map if pruned is None else pruned.kept_edges

        r_t2t = self.r_t2t(rel_input(graph.temporal, x.dtype))
        r_pl2a = self.r_pl2a(rel_input(map_edges, x.dtype))
        r_a2a = self.r_a2a(rel_input(graph.agent_agent, x.dtype))
        for i in range(len(self.rounds)):
            x = self.temporal_attention(x, graph, i, r_t2t)
            x = self.agent_map_attention(x_map, x, graph, i, pruned, r_pl2a)
            x = self.agent_agent_attention(x, graph, i, r_a2a)
        return x.view(graph.num_agents, graph.num_steps, -1)
