"""
K-mode forecasting metrics: minADE, minFDE, miss rate and brier-minFDE.
"""
from __future__ import annotations
import logging
import numpy as np
import pandas as pd
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence
from lanet.core.domain.forecast import Forecast, FutureTruth
from lanet.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

MISS_THRESHOLD = 2.0
REPORT_COLUMNS = ["b_min_fde", "min_ade", "min_fde", "miss_rate"]
REPORT_HEADERS = {"b_min_fde": "b-minFDE", "min_ade": "minADE", "min_fde": "minFDE", "miss_rate": "MR"}


@dataclass(frozen=True)
class MetricCase:
    """
    One target agent: locations (K, T, 2), probs (K,), truth (T, 2), valid (T,).
    """
    locations: np.ndarray
    probs: np.ndarray
    truth: np.ndarray
    valid: np.ndarray
    scenario_id: str = ""
    agent_id: str = ""


def _endpoint_errors(locations: np.ndarray, truth: np.ndarray, step: int) -> np.ndarray:
    return np.linalg.norm(np.asarray(locations, dtype=float)[:, step] - np.asarray(truth, dtype=float)[step], axis=-1)


def min_fde(locations: np.ndarray, truth: np.ndarray, valid: np.ndarray) -> tuple[float, int]:
    valid = np.asarray(valid, dtype=bool)
    if not valid[-1]:
        raise InvalidArgumentError("minFDE needs a valid final truth step")
    err = _endpoint_errors(locations, truth, len(valid) - 1)
    best = int(np.argmin(err))
    return float(err[best]), best


def min_ade(locations: np.ndarray, truth: np.ndarray, valid: np.ndarray) -> float:
    """
    Average displacement over valid steps of the mode with the smallest error
    at the last valid step.
    """
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise InvalidArgumentError("minADE needs at least one valid truth step")
    last = int(np.flatnonzero(valid)[-1])
    best = int(np.argmin(_endpoint_errors(locations, truth, last)))
    err = np.linalg.norm(np.asarray(locations, dtype=float)[best] - np.asarray(truth, dtype=float), axis=-1)
    return float(err[valid].mean())


def b_min_fde(locations: np.ndarray, probs: np.ndarray, truth: np.ndarray, valid: np.ndarray) -> float:
    fde, best = min_fde(locations, truth, valid)
    p = float(np.asarray(probs, dtype=float)[best])
    return fde + (1.0 - p) ** 2


def is_miss(locations: np.ndarray, truth: np.ndarray, valid: np.ndarray, threshold: float = MISS_THRESHOLD) -> bool:
    fde, _ = min_fde(locations, truth, valid)
    return fde > threshold


def miss_rate(cases: Sequence[MetricCase], threshold: float = MISS_THRESHOLD) -> float:
    if not cases:
        raise InvalidArgumentError("miss_rate needs at least one case")
    return float(np.mean([is_miss(c.locations, c.truth, c.valid, threshold) for c in cases]))


def cases_from_forecast(forecast: Forecast, truth: FutureTruth, scenario_id: str = "") -> list[MetricCase]:
    f = forecast.detach()
    loc = f.locations.cpu().numpy().astype(float)
    probs = f.mode_probs.cpu().numpy().astype(float)
    pos = truth.positions.detach().cpu().numpy().astype(float)
    valid = truth.valid.cpu().numpy().astype(bool)
    ids = f.agent_ids or truth.agent_ids or tuple(str(i) for i in range(f.num_agents))
    return [MetricCase(loc[i], probs[i], pos[i], valid[i], scenario_id, ids[i]) for i in range(f.num_agents)]


class MetricReport:
    """
    Per-case metric table; aggregates are case-weighted means.
    """

    def __init__(self, table: pd.DataFrame):
        self.table = table.reset_index(drop=True)

    def __len__(self) -> int:
        return len(self.table)

    @property
    def min_ade(self) -> float:
        return float(self.table["min_ade"].mean())

    @property
    def min_fde(self) -> float:
        return float(self.table["min_fde"].mean())

    @property
    def b_min_fde(self) -> float:
        return float(self.table["b_min_fde"].mean())

    @property
    def miss_rate(self) -> float:
        return float(self.table["miss"].mean())

    def summary(self) -> dict[str, float]:
        return {c: getattr(self, c) for c in REPORT_COLUMNS}

    def summary_frame(self, k: Optional[int] = None) -> pd.DataFrame:
        suffix = f"_{k}" if k else ""
        row = {REPORT_HEADERS[c] + suffix: v for c, v in self.summary().items()}
        row["cases"] = len(self)
        return pd.DataFrame([row])

    def merge(self, other: "MetricReport") -> "MetricReport":
        return MetricReport(pd.concat([self.table, other.table], ignore_index=True))

    def to_csv(self, path) -> None:
        self.table.to_csv(path, index=False, float_format="%.10g")

    def format_table(self, k: Optional[int] = None) -> str:
        return self.summary_frame(k).to_string(index=False, float_format=lambda v: f"{v:.4f}")

    def __repr__(self):
        return f"MetricReport({len(self)} cases, " + ", ".join(f"{k}={v:.4f}" for k, v in self.summary().items()) + ")"


def evaluate_forecasts(cases: Iterable[MetricCase]) -> MetricReport:
    rows = []
    skipped = 0
    for c in cases:
        valid = np.asarray(c.valid, dtype=bool)
        if not valid[-1]:
            skipped += 1
            logger.warning(f"Skipping {c.scenario_id}/{c.agent_id}: final truth step is not valid")
            continue
        fde, best = min_fde(c.locations, c.truth, valid)
        rows.append(
            {
                "scenario_id": c.scenario_id,
                "agent_id": c.agent_id,
                "min_ade": min_ade(c.locations, c.truth, valid),
                "min_fde": fde,
                "b_min_fde": b_min_fde(c.locations, c.probs, c.truth, valid),
                "miss": bool(fde > MISS_THRESHOLD),
                "best_mode": best,
                "best_prob": float(np.asarray(c.probs)[best]),
            }
        )
    if not rows:
        raise InvalidArgumentError(f"No evaluable cases ({skipped} skipped for an invalid final step)")
    return MetricReport(pd.DataFrame.from_records(rows))
