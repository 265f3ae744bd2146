"""
Context-aware interaction pruning of agent <- map edges.

Each candidate edge is scored from its relative geometry, dropped when its
score falls below a learnable threshold, and the survivors are re-weighted by
a temperature-scaled sigmoid normalised per query node.
"""
from __future__ import annotations
import logging
import math
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from dataclasses import dataclass
from typing import Optional, Union
from torch_geometric.utils import softmax
from lanet.config import CaipConfig
from lanet.core.domain.geometry import REL_DIM, EdgeList
from lanet.core.nn.layers import MLP
from lanet.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

CAIP_FEATURE_DIM = 5


def caip_edge_features(rel: Union[np.ndarray, EdgeList], dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """
    [distance, cos dθ (heading alignment), sin dθ, cos bearing, sin bearing].
    """
    if isinstance(rel, EdgeList):
        rel = rel.rel
    rel = np.asarray(rel, dtype=float).reshape(-1, REL_DIM)
    feats = np.stack([rel[:, 0], np.cos(rel[:, 1]), np.sin(rel[:, 1]), np.cos(rel[:, 2]), np.sin(rel[:, 2])], axis=-1)
    return torch.as_tensor(feats, dtype=dtype)


@dataclass
class PrunedEdges:
    kept_edges: EdgeList
    scores: torch.Tensor
    soft_weights: torch.Tensor
    valid_mask: np.ndarray
    all_scores: torch.Tensor

    @property
    def num_candidates(self) -> int:
        return int(self.valid_mask.size)

    @property
    def num_kept(self) -> int:
        return int(self.valid_mask.sum())

    @property
    def kept_fraction(self) -> float:
        return self.num_kept / self.num_candidates if self.num_candidates else 1.0


def hard_mask(scores: torch.Tensor, theta: Union[float, torch.Tensor]) -> torch.Tensor:
    theta = theta.detach() if isinstance(theta, torch.Tensor) else theta
    return scores.detach() >= theta


def soft_weights(
    scores: torch.Tensor,
    index: torch.Tensor,
    theta: Union[float, torch.Tensor],
    tau: Union[float, torch.Tensor],
    sign: int = 1,
    num_nodes: Optional[int] = None,
) -> torch.Tensor:
    """
    w_j = sigmoid(sign * (S_j - θ) / τ), normalised over the edges sharing a
    query node. Computed in log space so small τ saturates instead of dividing
    zero by zero.
    """
    if isinstance(tau, (int, float)) and not tau > 0:
        raise InvalidArgumentError(f"temperature must be > 0, got {tau}")
    logits = F.logsigmoid(sign * (scores - theta) / tau)
    return softmax(logits, index, num_nodes=num_nodes)


def soft_weight(
    values: torch.Tensor,
    scores: torch.Tensor,
    index: torch.Tensor,
    theta: Union[float, torch.Tensor],
    tau: Union[float, torch.Tensor],
    sign: int = 1,
    num_nodes: Optional[int] = None,
) -> torch.Tensor:
    w = soft_weights(scores, index, theta, tau, sign, num_nodes)
    return values * w.view(-1, *([1] * (values.dim() - 1)))


def _starvation_guard(mask: np.ndarray, scores: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """
    Keep the single highest-scoring candidate of any query that lost all of them.
    """
    mask = mask.copy()
    for q in np.unique(queries):
        rows = np.flatnonzero(queries == q)
        if not mask[rows].any():
            mask[rows[np.argmax(scores[rows])]] = True
    return mask


class CaipModule(nn.Module):
    def __init__(self, config: CaipConfig):
        super().__init__()
        self.scorer = MLP([CAIP_FEATURE_DIM, *config.scorer_hidden, 1])
        p = config.threshold_init
        self.threshold_logit = nn.Parameter(torch.tensor(math.log(p / (1.0 - p))))
        log_tau = torch.tensor(math.log(config.temperature_init))
        if config.learn_temperature:
            self.log_tau = nn.Parameter(log_tau)
        else:
            self.register_buffer("log_tau", log_tau)
        self.sign = -1 if config.favor_low_scores else 1

    @property
    def theta(self) -> torch.Tensor:
        return torch.sigmoid(self.threshold_logit)

    @property
    def tau(self) -> torch.Tensor:
        return torch.exp(self.log_tau)

    def score_edges(self, features: torch.Tensor) -> torch.Tensor:
        if features.dim() != 2 or features.shape[-1] != CAIP_FEATURE_DIM:
            raise InvalidArgumentError(f"CAIP features must be (E, {CAIP_FEATURE_DIM}), got {tuple(features.shape)}")
        return torch.sigmoid(self.scorer(features)).squeeze(-1)

    def prune(self, edges: EdgeList, num_queries: Optional[int] = None, threshold: Optional[float] = None) -> PrunedEdges:
        """
        Score, hard-mask and soft-weight ``edges``; queries are edge targets.
        ``threshold`` replaces the learned θ (sweeps).
        """
        dtype = self.threshold_logit.dtype
        scores = self.score_edges(caip_edge_features(edges, dtype))
        theta = self.theta if threshold is None else torch.tensor(float(threshold), dtype=dtype)

        mask = hard_mask(scores, theta).cpu().numpy()
        if len(edges):
            mask = _starvation_guard(mask, scores.detach().cpu().numpy(), edges.targets)
        kept = edges.select(mask)
        keep_idx = torch.as_tensor(np.flatnonzero(mask))
        kept_scores = scores[keep_idx]
        index = torch.as_tensor(kept.targets)
        if len(kept):
            weights = soft_weights(kept_scores, index, theta, self.tau, self.sign, num_queries)
        else:
            weights = kept_scores
        return PrunedEdges(kept, kept_scores, weights, mask, scores)


def score_edges(module: CaipModule, features: torch.Tensor) -> torch.Tensor:
    return module.score_edges(features)
