"""
Propose-and-refine multimodal decoder.

Every target agent gets K mode queries (its embedding at the last valid
observed step plus a mode index embedding). A stack of attention layers over
the agent's history, the pruned map neighbourhood, nearby agents and the
other modes produces anchor-free proposals, expressed as cumulative offsets in
the agent's current frame. Refinement revisits the same context conditioned on
the proposal and adds local corrections plus mode logits.
"""
from __future__ import annotations
import logging
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from dataclasses import dataclass
from typing import Optional
from lanet.config import ModelConfig, ProblemConfig
from lanet.core.domain.forecast import Forecast
from lanet.core.domain.geometry import EdgeList, radius_graph, rel_features, rotate_xy, wrap_angle_tensor
from lanet.core.model.agent_encoder import AgentGraph
from lanet.core.model.caip import CaipModule, PrunedEdges
from lanet.core.nn.layers import MLP, EdgeAttention, rel_input

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecoderGraph:
    """
    Candidate edges into target j (row of ``target_agents``). History and
    neighbour sources are agent-step node ids, map sources polygon indices.
    """
    target_agents: np.ndarray
    agent_ids: tuple[str, ...]
    current_step: np.ndarray
    current_pose: np.ndarray
    temporal: EdgeList
    agent_map: EdgeList
    agent_agent: EdgeList

    @property
    def num_targets(self) -> int:
        return len(self.target_agents)


def build_decoder_graph(
    agent_graph: AgentGraph,
    anchor_poses: np.ndarray,
    target_agents: list[int],
    agent_ids: tuple[str, ...],
    config: ModelConfig,
) -> DecoderGraph:
    h = agent_graph.num_steps
    mask = agent_graph.step_mask
    poses = agent_graph.poses
    targets = np.asarray(target_agents, dtype=np.int64)
    current_step = np.array([np.flatnonzero(mask[a]).max() for a in targets], dtype=np.int64)
    current_pose = poses[targets, current_step] if len(targets) else np.zeros((0, 3))

    temporal = []
    for j, (a, t) in enumerate(zip(targets, current_step)):
        steps = np.flatnonzero(mask[a, : t + 1])
        rel = rel_features(poses[a, steps], np.repeat(current_pose[j : j + 1], len(steps), axis=0), t - steps)
        temporal.append(EdgeList(a * h + steps, np.full(len(steps), j), rel))

    agent_map = radius_graph(anchor_poses, current_pose, config.decoder_map_radius)

    # neighbours are observed at the target's own current step
    agent_agent = []
    for j, (a, t) in enumerate(zip(targets, current_step)):
        present = mask[:, t].copy()
        present[a] = False
        found = radius_graph(poses[:, t], current_pose[j : j + 1], config.decoder_agent_radius, (present, np.ones(1, dtype=bool)))
        agent_agent.append(EdgeList(found.sources * h + t, np.full(len(found), j), found.rel))

    return DecoderGraph(
        target_agents=targets,
        agent_ids=tuple(agent_ids),
        current_step=current_step,
        current_pose=current_pose,
        temporal=EdgeList.concat(temporal),
        agent_map=agent_map,
        agent_agent=EdgeList.concat(agent_agent),
    )


def _replicate(edges: EdgeList, k: int) -> torch.Tensor:
    src = np.repeat(edges.sources, k)
    dst = np.repeat(edges.targets, k) * k + np.tile(np.arange(k), len(edges))
    return torch.as_tensor(np.stack([src, dst]), dtype=torch.long)


def _mode_edges(num_targets: int, k: int) -> torch.Tensor:
    a, b = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    off = a != b
    src = (np.arange(num_targets)[:, None] * k + a[off][None, :]).reshape(-1)
    dst = (np.arange(num_targets)[:, None] * k + b[off][None, :]).reshape(-1)
    return torch.as_tensor(np.stack([src, dst]), dtype=torch.long)


@dataclass
class DecoderContext:
    temporal_index: torch.Tensor
    temporal_rel: torch.Tensor
    map_index: torch.Tensor
    map_rel: torch.Tensor
    map_weight: Optional[torch.Tensor]
    agent_index: torch.Tensor
    agent_rel: torch.Tensor
    mode_index: torch.Tensor
    pruned: Optional[PrunedEdges]


@dataclass
class ModeState:
    embeddings: torch.Tensor
    num_agents: int
    num_modes: int
    context: DecoderContext


class DecoderLayer(nn.Module):
    def __init__(self, hidden_dim: int, num_heads: int):
        super().__init__()
        self.temporal = EdgeAttention(hidden_dim, num_heads, bipartite=True)
        self.agent_map = EdgeAttention(hidden_dim, num_heads, bipartite=True)
        self.agent_agent = EdgeAttention(hidden_dim, num_heads, bipartite=True)
        self.modes = EdgeAttention(hidden_dim, num_heads, has_edge_attr=False)

    def forward(self, q: torch.Tensor, x_hist: torch.Tensor, x_map: torch.Tensor, ctx: DecoderContext) -> torch.Tensor:
        q = self.temporal((x_hist, q), ctx.temporal_index, ctx.temporal_rel)
        q = self.agent_map((x_map, q), ctx.map_index, ctx.map_rel, ctx.map_weight)
        q = self.agent_agent((x_hist, q), ctx.agent_index, ctx.agent_rel)
        return self.modes(q, ctx.mode_index)


class Decoder(nn.Module):
    def __init__(self, problem: ProblemConfig, config: ModelConfig):
        super().__init__()
        d = config.hidden_dim
        t = problem.future_steps
        self.num_modes = problem.num_modes
        self.horizon = t
        self.refine_steps = config.refine_steps
        self.scale_floor = config.scale_floor

        self.mode_embedding = nn.Embedding(problem.num_modes, d)
        self.r_time = MLP([6, d, d])
        self.r_map = MLP([6, d, d])
        self.r_agent = MLP([6, d, d])

        self.propose_layers = nn.ModuleList(DecoderLayer(d, config.num_heads) for _ in range(config.decoder_layers))
        self.loc_head = MLP([d, d, 2 * t])
        self.scale_head = MLP([d, d, 2 * t])
        self.heading_head = MLP([d, d, 2 * t])
        self.confidence_head = MLP([d, d, t])

        self.trajectory_mlp = MLP([4 * t, d, d])
        self.refine_layer = DecoderLayer(d, config.num_heads)
        self.refine_loc_head = MLP([d, d, 2 * t])
        self.refine_scale_head = MLP([d, d, 2 * t])
        self.refine_heading_head = MLP([d, d, t])
        self.refine_confidence_head = MLP([d, d, t])
        self.cls_head = MLP([d, d, 1])

    def _dtype(self) -> torch.dtype:
        return self.mode_embedding.weight.dtype

    def attention_context(
        self,
        graph: DecoderGraph,
        caip: Optional[CaipModule] = None,
        threshold: Optional[float] = None,
    ) -> DecoderContext:
        k = self.num_modes
        dtype = self._dtype()
        pruned = None
        map_edges = graph.agent_map
        map_weight = None
        if caip is not None:
            pruned = caip.prune(graph.agent_map, num_queries=graph.num_targets, threshold=threshold)
            map_edges = pruned.kept_edges
            map_weight = pruned.soft_weights.repeat_interleave(k)
            logger.debug(f"Decoder interaction pruning kept {pruned.num_kept}/{pruned.num_candidates} agent-map edges")
        return DecoderContext(
            temporal_index=_replicate(graph.temporal, k),
            temporal_rel=self.r_time(rel_input(graph.temporal, dtype)).repeat_interleave(k, dim=0),
            map_index=_replicate(map_edges, k),
            map_rel=self.r_map(rel_input(map_edges, dtype)).repeat_interleave(k, dim=0),
            map_weight=map_weight,
            agent_index=_replicate(graph.agent_agent, k),
            agent_rel=self.r_agent(rel_input(graph.agent_agent, dtype)).repeat_interleave(k, dim=0),
            mode_index=_mode_edges(graph.num_targets, k),
            pruned=pruned,
        )

    def _frame(self, graph: DecoderGraph) -> tuple[torch.Tensor, torch.Tensor]:
        pose = torch.as_tensor(graph.current_pose, dtype=self._dtype())
        return pose[:, :2], pose[:, 2]

    def propose(
        self,
        x_agent: torch.Tensor,
        x_map: torch.Tensor,
        graph: DecoderGraph,
        caip: Optional[CaipModule] = None,
        threshold: Optional[float] = None,
        context: Optional[DecoderContext] = None,
    ) -> tuple[Forecast, ModeState]:
        ctx = context or self.attention_context(graph, caip, threshold)
        a, k, t = graph.num_targets, self.num_modes, self.horizon
        x_hist = x_agent.reshape(-1, x_agent.shape[-1])

        current = x_agent[torch.as_tensor(graph.target_agents), torch.as_tensor(graph.current_step)]
        modes = self.mode_embedding(torch.arange(k))
        q = (current.unsqueeze(1) + modes.unsqueeze(0)).reshape(a * k, -1)
        for layer in self.propose_layers:
            q = layer(q, x_hist, x_map, ctx)

        xy, heading = self._frame(graph)
        offsets = self.loc_head(q).view(a, k, t, 2).cumsum(dim=2)
        locations = rotate_xy(offsets, heading.view(a, 1, 1)) + xy.view(a, 1, 1, 2)
        scales = F.softplus(self.scale_head(q)).view(a, k, t, 2) + self.scale_floor
        hv = self.heading_head(q).view(a, k, t, 2)
        headings = wrap_angle_tensor(torch.atan2(hv[..., 1], hv[..., 0]) + heading.view(a, 1, 1))
        confidence = torch.sigmoid(self.confidence_head(q)).view(a, k, t)
        logits = torch.zeros((a, k), dtype=q.dtype)

        proposal = Forecast(locations, scales, headings, confidence, logits, graph.agent_ids)
        return proposal, ModeState(q, a, k, ctx)

    def refine(
        self,
        proposal: Forecast,
        state: ModeState,
        x_agent: torch.Tensor,
        x_map: torch.Tensor,
        graph: DecoderGraph,
        steps: Optional[int] = None,
    ) -> Forecast:
        steps = self.refine_steps if steps is None else steps
        a, k, t = state.num_agents, state.num_modes, self.horizon
        x_hist = x_agent.reshape(-1, x_agent.shape[-1])
        xy, heading = self._frame(graph)

        local_xy = rotate_xy(proposal.locations - xy.view(a, 1, 1, 2), -heading.view(a, 1, 1))
        local_heading = proposal.headings - heading.view(a, 1, 1)
        trajectory = torch.cat(
            [local_xy.reshape(a, k, 2 * t), torch.cos(local_heading), torch.sin(local_heading)],
            dim=-1,
        ).reshape(a * k, 4 * t)

        q = state.embeddings + self.trajectory_mlp(trajectory)
        for _ in range(steps):
            q = self.refine_layer(q, x_hist, x_map, state.context)

        delta = rotate_xy(self.refine_loc_head(q).view(a, k, t, 2), heading.view(a, 1, 1))
        locations = proposal.locations + delta
        scales = F.softplus(self.refine_scale_head(q)).view(a, k, t, 2) + self.scale_floor
        headings = wrap_angle_tensor(proposal.headings + self.refine_heading_head(q).view(a, k, t))
        confidence = torch.sigmoid(self.refine_confidence_head(q)).view(a, k, t)
        logits = self.cls_head(q).view(a, k)
        return Forecast(locations, scales, headings, confidence, logits, proposal.agent_ids)
