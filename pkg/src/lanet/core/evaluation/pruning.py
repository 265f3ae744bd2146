import logging
import pandas as pd
import torch
from typing import Optional, Sequence
from lanet.core.evaluation.metrics import cases_from_forecast, evaluate_forecasts
from lanet.core.model.inputs import SceneInputs
from lanet.core.model.lanet import LANet
from lanet.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8)
PRUNE_COLUMNS = ["threshold", "candidates", "kept", "kept_fraction", "b_min_fde", "min_ade", "min_fde", "miss_rate"]


def evaluate_at_threshold(model: LANet, dataset: Sequence[SceneInputs], threshold: Optional[float]) -> dict:
    """
    Decoder kept-edge counts and metrics with θ fixed to ``threshold``
    (the learned θ when None).
    """
    candidates = kept = 0
    cases = []
    with torch.no_grad():
        for inputs in dataset:
            if inputs.num_targets == 0:
                continue
            out = model(inputs, threshold=threshold)
            if out.pruned is not None:
                candidates += out.pruned.num_candidates
                kept += out.pruned.num_kept
            cases.extend(cases_from_forecast(out.refined, inputs.truth, inputs.scenario_id))
    report = evaluate_forecasts(cases)
    theta = float(model.caip.theta) if threshold is None else float(threshold)
    return {
        "threshold": theta,
        "candidates": candidates,
        "kept": kept,
        "kept_fraction": kept / candidates if candidates else 1.0,
        **report.summary(),
    }


def prune_stats(
    model: LANet,
    dataset: Sequence[SceneInputs],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    include_learned: bool = False,
) -> pd.DataFrame:
    if not dataset:
        raise InvalidArgumentError("prune_stats needs at least one scene")
    rows = []
    for theta in thresholds:
        if not 0.0 <= theta <= 1.0:
            raise InvalidArgumentError(f"Threshold {theta} is outside [0, 1]")
        rows.append({"source": "sweep", **evaluate_at_threshold(model, dataset, theta)})
        logger.debug(f"θ={theta}: kept fraction {rows[-1]['kept_fraction']:.3f}")
    if include_learned:
        rows.append({"source": "learned", **evaluate_at_threshold(model, dataset, None)})
    return pd.DataFrame.from_records(rows, columns=["source", *PRUNE_COLUMNS])
