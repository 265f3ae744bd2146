"""
Laplace-mixture likelihood, winner-take-all regression and the combined
propose/refine/classification objective.
"""
from __future__ import annotations
import logging
import math
import torch
from dataclasses import dataclass
from typing import Optional
from lanet.core.domain.forecast import Forecast, FutureTruth
from lanet.core.domain.geometry import wrap_angle_tensor
from lanet.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)


@dataclass
class LossBreakdown:
    propose: torch.Tensor
    refine: torch.Tensor
    cls: torch.Tensor
    total: torch.Tensor
    winner_index: torch.Tensor
    lambda_cls: float

    def as_dict(self) -> dict[str, float]:
        return {
            "L_propose": float(self.propose.detach()),
            "L_refine": float(self.refine.detach()),
            "L_cls": float(self.cls.detach()),
            "total": float(self.total.detach()),
        }


def _check_truth(forecast: Forecast, truth: FutureTruth) -> torch.Tensor:
    if forecast.num_agents != truth.num_agents or forecast.horizon != truth.positions.shape[1]:
        raise InvalidArgumentError(
            f"Forecast ({forecast.num_agents} agents, {forecast.horizon} steps) does not match truth "
            f"({truth.num_agents} agents, {truth.positions.shape[1]} steps)"
        )
    valid = truth.valid.to(torch.bool)
    empty = ~valid.any(dim=1)
    if bool(empty.any()):
        rows = torch.nonzero(empty).view(-1).tolist()
        raise InvalidArgumentError(f"Target rows {rows} have no valid future step")
    return valid


def laplace_log_density(residual: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return -torch.log(2.0 * scale) - residual.abs() / scale


def laplace_mixture_nll(forecast: Forecast, truth: FutureTruth, stop_grad_components: bool = False) -> torch.Tensor:
    """
    Mean over agents of -log Σ_k α_k Π_{valid s, axis} Laplace(q | ν, β).

    With ``stop_grad_components`` only the mode logits receive gradient.
    """
    valid = _check_truth(forecast, truth)
    loc, scale = forecast.locations, forecast.scales
    if stop_grad_components:
        loc, scale = loc.detach(), scale.detach()
    q = truth.positions.to(loc.dtype).unsqueeze(1)
    log_p = laplace_log_density(q - loc, scale).sum(dim=-1)
    log_p = (log_p * valid.unsqueeze(1).to(log_p.dtype)).sum(dim=-1)
    log_alpha = torch.log_softmax(forecast.mode_logits, dim=-1)
    return -torch.logsumexp(log_alpha + log_p, dim=-1).mean()


def last_valid_step(valid: torch.Tensor) -> torch.Tensor:
    steps = torch.arange(valid.shape[1]).expand_as(valid)
    return torch.where(valid, steps, -1).max(dim=1).values


def select_winner(forecast: Forecast, truth: FutureTruth) -> torch.Tensor:
    """
    Mode with the smallest displacement at the last valid future step; ties
    go to the lower mode index.
    """
    valid = _check_truth(forecast, truth)
    last = last_valid_step(valid)
    rows = torch.arange(forecast.num_agents)
    end_pred = forecast.locations.detach()[rows, :, last]
    end_true = truth.positions.to(end_pred.dtype)[rows, last]
    dist = torch.linalg.vector_norm(end_pred - end_true.unsqueeze(1), dim=-1)
    return torch.argmin(dist, dim=-1)


def wta_regression_loss(forecast: Forecast, truth: FutureTruth, eps: float = 1e-3) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Laplace NLL of the winning mode's positions and headings, summed over
    valid steps and averaged over agents. Heading scale is -log(confidence) + eps.
    """
    valid = _check_truth(forecast, truth)
    winner = select_winner(forecast, truth)
    rows = torch.arange(forecast.num_agents)
    mask = valid.to(forecast.locations.dtype)

    loc = forecast.locations[rows, winner]
    scale = forecast.scales[rows, winner]
    q = truth.positions.to(loc.dtype)
    pos_nll = -laplace_log_density(q - loc, scale).sum(dim=-1)

    heading_scale = -torch.log(forecast.heading_confidence[rows, winner]) + eps
    err = wrap_angle_tensor(truth.headings.to(loc.dtype) - forecast.headings[rows, winner])
    head_nll = -laplace_log_density(err, heading_scale)

    per_agent = ((pos_nll + head_nll) * mask).sum(dim=-1)
    return per_agent.mean(), winner


def total_loss(proposal: Forecast, refined: Forecast, truth: FutureTruth, lambda_cls: float = 1.0, eps: float = 1e-3) -> LossBreakdown:
    l_propose, _ = wta_regression_loss(proposal, truth, eps)
    l_refine, winner = wta_regression_loss(refined, truth, eps)
    l_cls = laplace_mixture_nll(refined, truth, stop_grad_components=True)
    total = l_propose + l_refine + lambda_cls * l_cls
    return LossBreakdown(l_propose, l_refine, l_cls, total, winner, lambda_cls)


def trainable_rows(truth: FutureTruth, forecast: Optional[Forecast] = None):
    """
    Rows with at least one valid future step, as a boolean numpy mask.
    """
    mask = truth.has_future()
    if forecast is not None and forecast.num_agents != len(mask):
        raise InvalidArgumentError("Forecast and truth disagree on the number of targets")
    return mask
