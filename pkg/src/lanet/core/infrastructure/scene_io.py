import json
import logging
from pathlib import Path
from typing import Any, Union
from pydantic import ValidationError
from lanet.core.domain.dataset import SceneIndex
from lanet.core.domain.scene import Scene
from lanet.errors import SceneParseError, SchemaViolationError

logger = logging.getLogger(__name__)

SCENE_SUFFIX = ".scene.json"


def dumps_scene(scene: Scene) -> str:
    """
    Canonical text form: model field order, aliases, 2-space indent, trailing newline.
    """
    return json.dumps(scene.model_dump(mode="json", by_alias=True), indent=2, ensure_ascii=False) + "\n"


def loads_scene(text: str, source: str = "<string>") -> Scene:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"{source}: not valid JSON ({exc.msg} at line {exc.lineno} column {exc.colno})") from exc
    if not isinstance(doc, dict):
        raise SchemaViolationError(f"{source}: top level must be an object", [{"loc": (), "msg": "expected object"}])
    try:
        return Scene.model_validate(doc)
    except ValidationError as exc:
        raise SchemaViolationError.from_pydantic(f"{source}: scene failed validation", exc) from exc


def load_scene(path: Union[str, Path]) -> Scene:
    path = Path(path).expanduser().resolve()
    if not path.is_file():
        raise FileNotFoundError(str(path))
    scene = loads_scene(path.read_text(encoding="utf-8"), source=str(path))
    logger.debug(f"Loaded scene {scene.scenario_id} from {path}: {len(scene.agents)} agents, {len(scene.polygons)} polygons")
    return scene


def save_scene(scene: Scene, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_scene(scene), encoding="utf-8")
    return path


def scene_files(directory: Union[str, Path]) -> list[Path]:
    directory = Path(directory).expanduser().resolve()
    if not directory.is_dir():
        raise FileNotFoundError(str(directory))
    return sorted(directory.glob(f"*{SCENE_SUFFIX}"))


def scene_index(directory: Union[str, Path]) -> SceneIndex:
    return SceneIndex(scene_files(directory), load_scene, SCENE_SUFFIX)


def load_scene_dir(directory: Union[str, Path]) -> list[Scene]:
    return scene_index(directory).scenes()


def write_json(doc: Any, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path
