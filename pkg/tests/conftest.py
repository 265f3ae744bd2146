import math
import numpy as np
import pytest
import torch
from pathlib import Path
from lanet.config import CaipConfig, GeneratorSpec, ModelConfig, ProblemConfig, RunConfig, TrainConfig
from lanet.core.domain.geometry import Rigid2
from lanet.core.infrastructure.scene_io import load_scene
from lanet.core.model.inputs import prepare_scene
from lanet.core.model.lanet import LANet
from lanet.core.synth.generator import synthesize_corpus, synthesize_scene
from lanet.core.training.trainer import train

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def golden_path() -> Path:
    return DATA_DIR / "tiny_straight.scene.json"


@pytest.fixture
def tiny_scene(golden_path):
    return load_scene(golden_path)


@pytest.fixture
def small_problem() -> ProblemConfig:
    return ProblemConfig(history_steps=4, future_steps=5, num_modes=3, points_per_polyline=4, step_period=0.1)


@pytest.fixture
def toy_model_config() -> ModelConfig:
    return ModelConfig(
        hidden_dim=8,
        num_heads=2,
        map_rounds=1,
        encoder_rounds=1,
        knn_k=3,
        refine_steps=1,
        caip=CaipConfig(scorer_hidden=(4,)),
    )


@pytest.fixture
def small_spec(small_problem) -> GeneratorSpec:
    return GeneratorSpec(
        num_lanes=2,
        segments_per_lane=1,
        segment_length=30.0,
        max_curvature=0.01,
        crosswalk_probability=0.0,
        min_agents=2,
        max_agents=2,
        num_targets=1,
        min_speed=2.0,
        max_speed=8.0,
        problem=small_problem,
    )


@pytest.fixture
def synth_scene(small_spec):
    return synthesize_scene(3, small_spec)


@pytest.fixture
def synth_corpus(small_spec):
    return synthesize_corpus(11, small_spec, 50)


@pytest.fixture
def toy_run_config(small_problem, toy_model_config) -> RunConfig:
    return RunConfig(
        seed=0,
        problem=small_problem,
        model=toy_model_config,
        train=TrainConfig(dtype="float64", learning_rate=3e-3, steps=5),
    )


@pytest.fixture
def toy_model(small_problem, toy_model_config) -> LANet:
    return LANet(small_problem, toy_model_config, seed=0).double()


@pytest.fixture
def synth_inputs(synth_scene, toy_model_config):
    return prepare_scene(synth_scene, toy_model_config)


@pytest.fixture
def random_rigid():
    def make(rng: np.random.Generator) -> Rigid2:
        return Rigid2(
            angle=float(rng.uniform(-math.pi, math.pi)),
            tx=float(rng.uniform(-100, 100)),
            ty=float(rng.uniform(-100, 100)),
        )

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    yield


@pytest.fixture(scope="session")
def overfit_run():
    """
    Full-batch training on ten synthetic scenes with the default architecture;
    shared by the slow acceptance tests.
    """
    problem = ProblemConfig(history_steps=10, future_steps=20, num_modes=6)
    spec = GeneratorSpec(problem=problem, crosswalk_probability=0.0, observation_dropout=0.0)
    config = ModelConfig()
    dataset = [prepare_scene(s, config) for s in synthesize_corpus(0, spec, 10)]
    torch.manual_seed(0)
    model = LANet(problem, config, seed=0)
    train_config = TrainConfig(steps=2000, learning_rate=3e-3, warmup_steps=50, batch_size=len(dataset), dtype="float64")
    return dataset, train(model, dataset, train_config)
