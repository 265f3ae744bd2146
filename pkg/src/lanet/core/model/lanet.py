"""
The full forecaster: map encoder, agent encoder, interaction pruning and the
propose-and-refine decoder.
"""
import logging
import torch
import torch.nn as nn
from dataclasses import dataclass
from typing import Optional
from lanet.config import ModelConfig, ProblemConfig, RunConfig
from lanet.core.domain.forecast import Forecast
from lanet.core.model.agent_encoder import AgentEncoder
from lanet.core.model.caip import CaipModule, PrunedEdges
from lanet.core.model.decoder import Decoder
from lanet.core.model.inputs import SceneInputs
from lanet.core.model.map_encoder import MapEncoder
from lanet.core.nn.layers import seeded_init

logger = logging.getLogger(__name__)


@dataclass
class ModelOutput:
    proposal: Forecast
    refined: Forecast
    x_map: torch.Tensor
    x_agent: torch.Tensor
    pruned: Optional[PrunedEdges] = None


class LANet(nn.Module):
    def __init__(self, problem: ProblemConfig, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.problem = problem
        self.config = config
        self.seed = seed
        with seeded_init(seed):
            self.map_encoder = MapEncoder(config)
            self.agent_encoder = AgentEncoder(config)
            self.caip = CaipModule(config.caip)
            self.decoder = Decoder(problem, config)

    def encode(self, inputs: SceneInputs) -> tuple[torch.Tensor, torch.Tensor]:
        x_map = self.map_encoder(inputs.map_graph).x_map
        caip = self.caip if self.config.caip.in_encoder else None
        x_agent = self.agent_encoder(inputs.agent_graph, x_map, caip)
        return x_map, x_agent

    def forward(self, inputs: SceneInputs, threshold: Optional[float] = None) -> ModelOutput:
        x_map, x_agent = self.encode(inputs)
        graph = inputs.decoder_graph
        proposal, state = self.decoder.propose(x_agent, x_map, graph, self.caip, threshold)
        refined = self.decoder.refine(proposal, state, x_agent, x_map, graph)
        return ModelOutput(proposal, refined, x_map, x_agent, state.context.pruned)

    def predict(self, inputs: SceneInputs, threshold: Optional[float] = None) -> Forecast:
        with torch.no_grad():
            return self(inputs, threshold).refined.detach()


def build_model(config: RunConfig) -> LANet:
    model = LANet(config.problem, config.model, seed=config.seed)
    if config.train.dtype == "float64":
        model = model.double()
    n_params = sum(p.numel() for p in model.parameters())
    logger.debug(f"Built LANet with {n_params} parameters (seed {config.seed}, {config.train.dtype})")
    return model
