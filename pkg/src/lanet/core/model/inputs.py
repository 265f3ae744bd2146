import logging
from dataclasses import dataclass
from typing import Optional
from lanet.config import ModelConfig, ProblemConfig
from lanet.core.domain.forecast import FutureTruth
from lanet.core.domain.scene import Scene
from lanet.core.model.agent_encoder import AgentGraph, build_agent_graph
from lanet.core.model.decoder import DecoderGraph, build_decoder_graph
from lanet.core.model.map_encoder import MapGraph, build_map_graph
from lanet.errors import InvalidArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneInputs:
    """
    Everything the model consumes for one scene; built once and reused across
    training steps.
    """
    scenario_id: str
    map_graph: MapGraph
    agent_graph: AgentGraph
    decoder_graph: DecoderGraph
    truth: FutureTruth

    @property
    def num_targets(self) -> int:
        return self.decoder_graph.num_targets


def prepare_scene(
    scene: Scene,
    config: ModelConfig,
    targets: Optional[list[int]] = None,
    problem: Optional[ProblemConfig] = None,
) -> SceneInputs:
    if problem is not None and scene.config != problem:
        raise InvalidArgumentError(f"Scene {scene.scenario_id} was built for {scene.config}, model expects {problem}")
    targets = scene.target_indices if targets is None else list(targets)
    map_graph = build_map_graph(scene, config.knn_k)
    agent_graph = build_agent_graph(scene, config, map_graph.anchor_poses)
    ids = tuple(scene.agents[i].agent_id for i in targets)
    decoder_graph = build_decoder_graph(agent_graph, map_graph.anchor_poses, targets, ids, config)
    truth = FutureTruth.from_scene(scene, targets)

    missing = [ids[j] for j, ok in enumerate(truth.has_future()) if not ok]
    if missing:
        logger.warning(f"Scene {scene.scenario_id}: target agents without a valid future step are not trained on: {missing}")
    return SceneInputs(scene.scenario_id, map_graph, agent_graph, decoder_graph, truth)
