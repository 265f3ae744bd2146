import logging
import torch
from pathlib import Path
from typing import Optional, Union
from lanet.config import RunConfig, diff_keys
from lanet.core.model.lanet import LANet, build_model
from lanet.errors import CheckpointMismatchError, InvalidArgumentError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def save_checkpoint(model: LANet, config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"format_version": FORMAT_VERSION, "config": config.dump(), "state_dict": model.state_dict()}, path)
    logger.info(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path], expected: Optional[RunConfig] = None) -> tuple[LANet, RunConfig]:
    """
    Rebuild the model stored at ``path``. When ``expected`` is given its
    architecture (problem + model sections) must match the stored one.
    """
    path = Path(path).expanduser().resolve()
    if not path.is_file():
        raise FileNotFoundError(str(path))
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise InvalidArgumentError(f"{path}: unsupported checkpoint format version {version}")

    stored = RunConfig.model_validate(payload["config"])
    if expected is not None:
        keys = diff_keys(stored.architecture(), expected.architecture())
        if keys:
            raise CheckpointMismatchError(keys)

    model = build_model(stored)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    logger.debug(f"Loaded checkpoint {path} (seed {stored.seed})")
    return model, stored
