"""
Multimodal forecast and ground-truth containers shared by the decoder, the
objective, the metrics and the output writers.
"""
from __future__ import annotations
import numpy as np
import torch
from dataclasses import dataclass
from typing import Any, Optional, Sequence
from lanet.core.domain.scene import Scene
from lanet.errors import InvalidArgumentError


def _row_index(rows) -> torch.Tensor:
    rows = np.asarray(rows)
    if rows.dtype == bool:
        return torch.as_tensor(np.flatnonzero(rows))
    return torch.as_tensor(rows.astype(np.int64).reshape(-1))


@dataclass(frozen=True)
class Forecast:
    """
    K Laplace trajectory modes per target agent.

    locations/scales: (A, K, T, 2), scene frame. headings/heading_confidence:
    (A, K, T). mode_logits: (A, K), mode probabilities are their softmax.
    """
    locations: torch.Tensor
    scales: torch.Tensor
    headings: torch.Tensor
    heading_confidence: torch.Tensor
    mode_logits: torch.Tensor
    agent_ids: tuple[str, ...] = ()

    def __post_init__(self):
        a, k, t, two = self.locations.shape
        if two != 2:
            raise InvalidArgumentError(f"locations must end in a 2-vector, got {tuple(self.locations.shape)}")
        expected = {
            "scales": (a, k, t, 2),
            "headings": (a, k, t),
            "heading_confidence": (a, k, t),
            "mode_logits": (a, k),
        }
        for name, shape in expected.items():
            got = tuple(getattr(self, name).shape)
            if got != shape:
                raise InvalidArgumentError(f"Forecast.{name} has shape {got}, expected {shape}")
        if self.agent_ids and len(self.agent_ids) != a:
            raise InvalidArgumentError(f"{len(self.agent_ids)} agent ids for {a} forecast rows")

    @property
    def num_agents(self) -> int:
        return self.locations.shape[0]

    @property
    def num_modes(self) -> int:
        return self.locations.shape[1]

    @property
    def horizon(self) -> int:
        return self.locations.shape[2]

    @property
    def mode_probs(self) -> torch.Tensor:
        return torch.softmax(self.mode_logits, dim=-1)

    def detach(self) -> "Forecast":
        return Forecast(
            self.locations.detach(),
            self.scales.detach(),
            self.headings.detach(),
            self.heading_confidence.detach(),
            self.mode_logits.detach(),
            self.agent_ids,
        )

    def select(self, rows) -> "Forecast":
        """
        Subset of agents by index list or boolean mask.
        """
        idx = _row_index(rows)
        ids = tuple(self.agent_ids[i] for i in idx.tolist()) if self.agent_ids else ()
        return Forecast(
            self.locations[idx],
            self.scales[idx],
            self.headings[idx],
            self.heading_confidence[idx],
            self.mode_logits[idx],
            ids,
        )

    def to_records(self, scenario_id: str) -> list[dict[str, Any]]:
        f = self.detach()
        probs = f.mode_probs
        records = []
        for i in range(f.num_agents):
            records.append(
                {
                    "scenario_id": scenario_id,
                    "agent_id": f.agent_ids[i] if f.agent_ids else str(i),
                    "locations": f.locations[i].tolist(),
                    "scales": f.scales[i].tolist(),
                    "headings": f.headings[i].tolist(),
                    "heading_confidence": f.heading_confidence[i].tolist(),
                    "mode_logits": f.mode_logits[i].tolist(),
                    "mode_probs": probs[i].tolist(),
                }
            )
        return records

    @classmethod
    def from_records(cls, records: Sequence[dict[str, Any]], dtype: torch.dtype = torch.float64) -> "Forecast":
        if not records:
            raise InvalidArgumentError("Cannot build a Forecast from zero records")

        def stack(key: str) -> torch.Tensor:
            return torch.tensor([r[key] for r in records], dtype=dtype)

        return cls(
            stack("locations"),
            stack("scales"),
            stack("headings"),
            stack("heading_confidence"),
            stack("mode_logits"),
            tuple(str(r["agent_id"]) for r in records),
        )


@dataclass(frozen=True)
class FutureTruth:
    """
    Ground-truth futures: positions (A, T, 2), headings (A, T), valid (A, T).
    """
    positions: torch.Tensor
    headings: torch.Tensor
    valid: torch.Tensor
    agent_ids: tuple[str, ...] = ()

    def __post_init__(self):
        a, t, _ = self.positions.shape
        if tuple(self.headings.shape) != (a, t) or tuple(self.valid.shape) != (a, t):
            raise InvalidArgumentError("FutureTruth fields are not aligned")

    @property
    def num_agents(self) -> int:
        return self.positions.shape[0]

    def has_future(self) -> np.ndarray:
        return self.valid.any(dim=1).cpu().numpy()

    def select(self, rows) -> "FutureTruth":
        idx = _row_index(rows)
        ids = tuple(self.agent_ids[i] for i in idx.tolist()) if self.agent_ids else ()
        return FutureTruth(self.positions[idx], self.headings[idx], self.valid[idx], ids)

    def to(self, dtype: torch.dtype) -> "FutureTruth":
        return FutureTruth(self.positions.to(dtype), self.headings.to(dtype), self.valid, self.agent_ids)

    @classmethod
    def from_scene(cls, scene: Scene, agent_indices: Optional[Sequence[int]] = None, dtype: torch.dtype = torch.float64) -> "FutureTruth":
        h = scene.config.history_steps
        t = scene.config.future_steps
        indices = scene.target_indices if agent_indices is None else list(agent_indices)
        if not indices:
            return cls(torch.zeros((0, t, 2), dtype=dtype), torch.zeros((0, t), dtype=dtype), torch.zeros((0, t), dtype=torch.bool))
        poses = np.stack([scene.agents[i].pose_array()[h:] for i in indices])
        valid = np.stack([scene.agents[i].valid_array()[h:] for i in indices])
        return cls(
            torch.as_tensor(poses[..., :2], dtype=dtype),
            torch.as_tensor(poses[..., 2], dtype=dtype),
            torch.as_tensor(valid, dtype=torch.bool),
            tuple(scene.agents[i].agent_id for i in indices),
        )
