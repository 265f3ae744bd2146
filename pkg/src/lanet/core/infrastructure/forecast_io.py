import json
import logging
from pathlib import Path
from typing import Any, Union
from lanet.core.domain.forecast import Forecast
from lanet.errors import SceneParseError

logger = logging.getLogger(__name__)

FORECAST_SUFFIX = ".forecast.json"


def save_forecast(forecast: Forecast, scenario_id: str, path: Union[str, Path]) -> Path:
    """
    One record per target agent under ``records``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"scenario_id": scenario_id, "records": forecast.to_records(scenario_id)}
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {forecast.num_agents} forecast records to {path}")
    return path


def load_forecast_records(path: Union[str, Path]) -> list[dict[str, Any]]:
    path = Path(path).expanduser().resolve()
    if not path.is_file():
        raise FileNotFoundError(str(path))
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"{path}: not valid JSON ({exc.msg})") from exc
    return list(doc.get("records", []))


def load_forecast(path: Union[str, Path]) -> Forecast:
    return Forecast.from_records(load_forecast_records(path))
