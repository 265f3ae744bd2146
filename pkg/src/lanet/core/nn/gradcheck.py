import logging
import numpy as np
import torch
import torch.nn as nn
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union
from lanet.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

Params = Union[nn.Module, Mapping[str, torch.Tensor], Sequence[torch.Tensor]]


@dataclass
class GradCheckReport:
    """
    Outcome of a finite-difference comparison. ``per_param`` holds the max
    relative error observed for each checked tensor.
    """
    tolerance: float
    per_param: dict[str, float] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    checked_entries: int = 0

    @property
    def max_rel_error(self) -> float:
        return max(self.per_param.values(), default=0.0)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __str__(self) -> str:
        status = "ok" if self.ok else f"{len(self.failures)} failing"
        return f"GradCheckReport({status}, max_rel_error={self.max_rel_error:.3e}, entries={self.checked_entries})"


def _named_tensors(params: Params) -> list[tuple[str, torch.Tensor]]:
    if isinstance(params, nn.Module):
        return [(n, p) for n, p in params.named_parameters() if p.requires_grad]
    if isinstance(params, Mapping):
        return list(params.items())
    return [(str(i), p) for i, p in enumerate(params)]


def grad_check(
    fn: Callable[[], torch.Tensor],
    params: Params,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    max_entries: Optional[int] = None,
    seed: int = 0,
    floor: float = 1e-5,
) -> GradCheckReport:
    """
    Compare reverse-mode gradients of the scalar ``fn()`` against central
    finite differences. ``max_entries`` caps the coordinates sampled per tensor.
    """
    named = _named_tensors(params)
    tensors = [p for _, p in named]
    loss = fn()
    if loss.numel() != 1:
        raise InvalidArgumentError(f"grad_check needs a scalar function, got shape {tuple(loss.shape)}")
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    for (name, p), g in zip(named, grads):
        analytic = torch.zeros_like(p) if g is None else g.detach()
        flat = p.view(-1)
        n = flat.numel()
        if n == 0:
            continue
        if max_entries is not None and n > max_entries:
            idx = np.sort(rng.choice(n, size=max_entries, replace=False))
        else:
            idx = np.arange(n)

        worst = 0.0
        for i in idx.tolist():
            with torch.no_grad():
                orig = flat[i].item()
                flat[i] = orig + step
                f_plus = fn().item()
                flat[i] = orig - step
                f_minus = fn().item()
                flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = analytic.view(-1)[i].item()
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
        report.per_param[name] = worst
        report.checked_entries += len(idx)
        if worst > tolerance:
            report.failures.append(name)
            logger.debug(f"grad_check {name}: max relative error {worst:.3e} > {tolerance:.1e}")
    return report
