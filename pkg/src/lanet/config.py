import json
import logging
import tomllib
from pathlib import Path
from typing import Any, Literal, Optional
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from lanet.errors import InvalidArgumentError, SchemaViolationError

logger = logging.getLogger(__name__)


class ProblemConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    history_steps: int = Field(default=10, ge=1)
    future_steps: int = Field(default=20, ge=1)
    num_modes: int = Field(default=6, ge=1)
    points_per_polyline: int = Field(default=10, ge=1)
    step_period: float = Field(default=0.1, gt=0)

    @property
    def total_steps(self) -> int:
        return self.history_steps + self.future_steps


class CaipConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    scorer_hidden: tuple[int, ...] = (32,)
    threshold_init: float = Field(default=0.5, gt=0, lt=1)
    temperature_init: float = Field(default=0.1, gt=0)
    learn_temperature: bool = True
    favor_low_scores: bool = False
    in_encoder: bool = False


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    hidden_dim: int = Field(default=32, ge=1)
    num_heads: int = Field(default=2, ge=1)
    map_rounds: int = Field(default=2, ge=0)
    encoder_rounds: int = Field(default=2, ge=0)
    knn_k: int = Field(default=8, ge=1)
    temporal_window: Optional[int] = Field(default=None, ge=1)
    agent_map_radius: float = Field(default=50.0, gt=0)
    agent_agent_radius: float = Field(default=50.0, gt=0)
    decoder_map_radius: float = Field(default=50.0, gt=0)
    decoder_agent_radius: float = Field(default=50.0, gt=0)
    decoder_layers: int = Field(default=1, ge=1)
    refine_steps: int = Field(default=2, ge=0)
    scale_floor: float = Field(default=1e-3, gt=0)
    caip: CaipConfig = Field(default_factory=CaipConfig)

    @model_validator(mode="after")
    def _heads_divide_width(self) -> "ModelConfig":
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(f"hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}")
        return self


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    lambda_cls: float = Field(default=1.0, ge=0, alias="lambda")
    learning_rate: float = Field(default=3e-3, ge=0)
    steps: int = Field(default=2000, ge=0)
    batch_size: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=0.0, ge=0)
    warmup_steps: int = Field(default=0, ge=0)
    dtype: Literal["float32", "float64"] = "float32"
    log_every: int = Field(default=50, ge=1)


class GeneratorSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    num_lanes: int = Field(default=2, ge=1)
    segments_per_lane: int = Field(default=2, ge=1)
    lane_width: float = Field(default=3.5, gt=0)
    segment_length: float = Field(default=40.0, gt=0)
    max_curvature: float = Field(default=0.01, ge=0)
    crosswalk_probability: float = Field(default=0.5, ge=0, le=1)
    road_edges: bool = False
    road_edge_margin: float = Field(default=1.0, ge=0)
    min_agents: int = Field(default=2, ge=1)
    max_agents: int = Field(default=4, ge=1)
    num_targets: int = Field(default=1, ge=0)
    min_speed: float = Field(default=2.0, ge=0)
    max_speed: float = Field(default=12.0, gt=0)
    lateral_noise: float = Field(default=0.3, ge=0)
    step_jitter: float = Field(default=0.05, ge=0)
    observation_dropout: float = Field(default=0.0, ge=0, lt=1)
    problem: ProblemConfig = Field(default_factory=ProblemConfig)

    @model_validator(mode="after")
    def _ranges(self) -> "GeneratorSpec":
        if self.min_agents > self.max_agents:
            raise ValueError("min_agents must not exceed max_agents")
        if self.min_speed > self.max_speed:
            raise ValueError("min_speed must not exceed max_speed")
        if self.num_targets > self.min_agents:
            raise ValueError("num_targets must not exceed min_agents")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = Field(default=0, ge=0)
    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    generator: GeneratorSpec = Field(default_factory=GeneratorSpec)

    def architecture(self) -> dict[str, Any]:
        return {"problem": self.problem.model_dump(mode="json"), "model": self.model.model_dump(mode="json")}

    def dump(self) -> dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)


def parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise InvalidArgumentError(f"Override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise InvalidArgumentError(f"Override '{text}' has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def _read_document(path: Path) -> dict[str, Any]:
    path = Path(path).expanduser().resolve()
    if not path.is_file():
        raise FileNotFoundError(str(path))
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise InvalidArgumentError(f"Could not parse config file {path}: {exc}") from exc


def _deep_merge(base: dict[str, Any], update: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_run_config(
    path: Optional[Path] = None,
    overrides: Optional[list[str]] = None,
    seed: Optional[int] = None,
) -> RunConfig:
    """
    Layered config: built-in defaults < file < --set overrides < --seed.
    """
    doc: dict[str, Any] = RunConfig().dump()
    if path is not None:
        doc = _deep_merge(doc, _read_document(path))
        logger.debug(f"Loaded config file {path}")

    for text in overrides or []:
        keys, value = parse_override(text)
        cursor = doc
        for k in keys[:-1]:
            nxt = cursor.get(k)
            if not isinstance(nxt, dict):
                raise InvalidArgumentError(f"Override key '{'.'.join(keys)}' does not name a config section")
            cursor = nxt
        cursor[keys[-1]] = value

    if seed is not None:
        doc["seed"] = seed
        doc.setdefault("train", {})["seed"] = seed

    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise SchemaViolationError.from_pydantic("Invalid run configuration", exc) from exc


def diff_keys(a: dict[str, Any], b: dict[str, Any], prefix: str = "") -> list[str]:
    keys: list[str] = []
    for k in sorted(set(a) | set(b)):
        name = f"{prefix}{k}"
        va, vb = a.get(k), b.get(k)
        if isinstance(va, dict) and isinstance(vb, dict):
            keys.extend(diff_keys(va, vb, prefix=f"{name}."))
        elif va != vb:
            keys.append(name)
    return keys
