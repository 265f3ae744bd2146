import logging
import math
import pandas as pd
import torch
from dataclasses import dataclass
from typing import Callable, Optional, Sequence
from lanet.config import TrainConfig
from lanet.core.model.inputs import SceneInputs
from lanet.core.model.lanet import LANet
from lanet.core.training.objective import LossBreakdown, total_loss, trainable_rows
from lanet.errors import DivergenceError, InvalidArgumentError

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ["step", "L_propose", "L_refine", "L_cls", "total"]

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class TrainResult:
    model: LANet
    curve: pd.DataFrame

    def final_loss(self) -> float:
        return float(self.curve["total"].iloc[-1]) if len(self.curve) else math.nan


def scene_loss(model: LANet, inputs: SceneInputs, lambda_cls: float) -> Optional[LossBreakdown]:
    rows = trainable_rows(inputs.truth)
    if not rows.any():
        return None
    out = model(inputs)
    truth = inputs.truth.select(rows)
    return total_loss(
        out.proposal.select(rows),
        out.refined.select(rows),
        truth,
        lambda_cls,
        eps=model.config.scale_floor,
    )


def _batches(n: int, batch_size: int, step: int) -> list[int]:
    return [(step * batch_size + j) % n for j in range(batch_size)]


def train(
    model: LANet,
    dataset: Sequence[SceneInputs],
    config: TrainConfig,
    on_step: Optional[Callable[[int, dict[str, float]], None]] = None,
) -> TrainResult:
    """
    Adam on the summed per-scene objective; scenes are visited in the given
    order, cycling, ``batch_size`` per step.
    """
    usable = [s for s in dataset if trainable_rows(s.truth).any()]
    if not usable:
        raise InvalidArgumentError("Training needs at least one scene with a target agent that has a valid future")
    if len(usable) < len(dataset):
        logger.warning(f"Skipping {len(dataset) - len(usable)} scenes without trainable target agents")

    model = model.to(DTYPES[config.dtype])
    model.train()
    torch.manual_seed(config.seed)
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=config.learning_rate,
        betas=config.betas,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )
    scheduler = None
    if config.warmup_steps > 0:
        warmup = config.warmup_steps
        scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lambda s: min(1.0, (s + 1) / warmup))

    logger.info(f"Training on {len(usable)} scenes for {config.steps} steps (lr={config.learning_rate}, batch={config.batch_size})")
    records = []
    for step in range(config.steps):
        optimizer.zero_grad()
        parts = [scene_loss(model, usable[i], config.lambda_cls) for i in _batches(len(usable), config.batch_size, step)]
        n = len(parts)
        total = sum(p.total for p in parts) / n
        row = {
            "step": step,
            "L_propose": float(sum(p.propose.detach() for p in parts) / n),
            "L_refine": float(sum(p.refine.detach() for p in parts) / n),
            "L_cls": float(sum(p.cls.detach() for p in parts) / n),
            "total": float(total.detach()),
        }
        if not all(math.isfinite(v) for k, v in row.items() if k != "step"):
            raise DivergenceError(step, {k: v for k, v in row.items() if k != "step"})

        total.backward()
        optimizer.step()
        if scheduler is not None:
            scheduler.step()
        records.append(row)
        if step % config.log_every == 0:
            logger.debug(f"step {step}: total={row['total']:.4f} propose={row['L_propose']:.4f} refine={row['L_refine']:.4f} cls={row['L_cls']:.4f}")
        if on_step is not None:
            on_step(step, row)

    model.eval()
    curve = pd.DataFrame.from_records(records, columns=LOSS_COLUMNS)
    if len(curve):
        logger.info(f"Training finished: total loss {curve['total'].iloc[0]:.4f} -> {curve['total'].iloc[-1]:.4f}")
    return TrainResult(model, curve)


def write_loss_curve(curve: pd.DataFrame, path) -> None:
    curve.to_csv(path, index=False, float_format="%.10g")
