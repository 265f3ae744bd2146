import logging
import pandas as pd
from pathlib import Path
from typing import Any, Callable, Literal, Optional, Sequence
from pydantic import BaseModel, ConfigDict, PrivateAttr
from lanet.config import RunConfig
from lanet.core.domain.forecast import Forecast
from lanet.core.domain.scene import Scene
from lanet.core.evaluation.metrics import MetricReport, cases_from_forecast, evaluate_forecasts
from lanet.core.evaluation.pruning import DEFAULT_THRESHOLDS, prune_stats
from lanet.core.infrastructure.checkpoint import load_checkpoint, save_checkpoint
from lanet.core.model.inputs import SceneInputs, prepare_scene
from lanet.core.model.lanet import LANet, build_model
from lanet.core.training.trainer import train
from lanet.errors import InvalidArgumentError

logger = logging.getLogger("lanet")


class Forecaster(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: Optional[RunConfig] = None
    log: Literal["INFO", "DEBUG", "WARNING"] = "WARNING"
    checkpoint: Optional[Path] = None

    _model: Optional[LANet] = PrivateAttr(default=None)
    _cache: dict[str, tuple[Scene, SceneInputs]] = PrivateAttr(default_factory=dict)

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        positional_fields = ("config", "log", "checkpoint")
        for i, val in enumerate(args):
            if i >= len(positional_fields):
                break
            key = positional_fields[i]
            if key not in kwargs:
                kwargs[key] = val

        super().__init__(**kwargs)

    def model_post_init(self, __context: Any) -> None:
        log_level = getattr(logging, self.log, logging.WARNING)
        logger.setLevel(log_level)
        root = logging.getLogger()
        if not root.handlers:
            logging.basicConfig(level=log_level)
        else:
            try:
                if root.level > log_level or root.level == 0:
                    root.setLevel(log_level)
            except Exception:
                logger.debug("Could not set root logger level", exc_info=True)

        if self.checkpoint is not None:
            self._model, stored = load_checkpoint(self.checkpoint, expected=self.config)
            if self.config is None:
                self.config = stored
        else:
            if self.config is None:
                self.config = RunConfig()
            self._model = build_model(self.config)

    @property
    def model(self) -> LANet:
        return self._model

    def prepare(self, scene: Scene) -> SceneInputs:
        cached = self._cache.get(scene.scenario_id)
        if cached is None or cached[0] is not scene:
            cached = (scene, prepare_scene(scene, self.config.model, problem=self.config.problem))
            self._cache[scene.scenario_id] = cached
        return cached[1]

    def predict(self, scene: Scene, threshold: Optional[float] = None) -> Forecast:
        self._model.eval()
        return self._model.predict(self.prepare(scene), threshold)

    def fit(self, scenes: Sequence[Scene], on_step: Optional[Callable[[int, dict[str, float]], None]] = None) -> pd.DataFrame:
        if not scenes:
            raise InvalidArgumentError("fit needs at least one scene")
        result = train(self._model, [self.prepare(s) for s in scenes], self.config.train, on_step)
        self._model = result.model
        return result.curve

    def evaluate(self, scenes: Sequence[Scene], threshold: Optional[float] = None) -> MetricReport:
        if not scenes:
            raise InvalidArgumentError("evaluate needs at least one scene")
        cases = []
        for scene in scenes:
            if not scene.target_indices:
                continue
            inputs = self.prepare(scene)
            cases.extend(cases_from_forecast(self.predict(scene, threshold), inputs.truth, scene.scenario_id))
        return evaluate_forecasts(cases)

    def prune_stats(self, scenes: Sequence[Scene], thresholds: Sequence[float] = DEFAULT_THRESHOLDS, include_learned: bool = True) -> pd.DataFrame:
        self._model.eval()
        return prune_stats(self._model, [self.prepare(s) for s in scenes], thresholds, include_learned)

    def save(self, path: Path) -> Path:
        return save_checkpoint(self._model, self.config, path)
