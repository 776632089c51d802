"""AdamW with decoupled weight decay, and a one-cycle learning-rate curve.

The decay term is applied directly to the parameter (p -= lr*wd*p),
separate from the bias-corrected moment update, so decay strength does
not depend on gradient magnitudes.  The schedule ramps with a cosine
from max_lr/div_factor up to max_lr over the warmup fraction of steps,
then anneals with a cosine down to max_lr/final_div_factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, ContractError, ShapeError


class AdamW:
    """Holds per-parameter moments; step() consumes .grad buffers."""

    def __init__(self, named_params, lr: float, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        if lr <= 0:
            raise ContractError(f"lr must be positive, got {lr}")
        self.named_params: list[tuple[str, Tensor]] = [
            (n, p) for n, p in named_params]
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for _, p in self.named_params]
        self.v = [np.zeros_like(p.data) for _, p in self.named_params]

    def step(self, lr: float | None = None) -> None:
        """One update; params with no gradient buffer are treated as zero-grad."""
        lr = self.lr if lr is None else lr
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, (name, p) in enumerate(self.named_params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter "
                                 f"shape {p.data.shape} for {name!r}")
            if not np.all(np.isfinite(g)):
                raise ContractError(f"non-finite gradient in parameter {name!r}")
            m = self.m[i]
            v = self.v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - lr * self.weight_decay * p.data - lr * update


def adamw_step(opt: AdamW, lr: float | None = None) -> None:
    opt.step(lr)


@dataclass(frozen=True)
class OneCycleSchedule:
    max_lr: float
    total_steps: int
    warmup_fraction: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self):
        if self.max_lr <= 0 or self.total_steps < 1:
            raise ContractError("max_lr must be positive and total_steps >= 1")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ContractError(f"warmup_fraction out of [0,1]: {self.warmup_fraction}")
        if self.div_factor < 1 or self.final_div_factor < 1:
            raise ContractError("div factors must be >= 1")


def one_cycle_lr(sched: OneCycleSchedule, step: int | float) -> float:
    """lr at an integer step in [0, total_steps]; cosine up then cosine down."""
    if not 0 <= step <= sched.total_steps:
        raise ContractError(f"step {step} outside [0, {sched.total_steps}]")
    peak = sched.warmup_fraction * sched.total_steps
    lo = sched.max_lr / sched.div_factor
    fin = sched.max_lr / sched.final_div_factor
    if step < peak:
        u = step / peak
        return lo + (sched.max_lr - lo) * 0.5 * (1.0 - math.cos(math.pi * u))
    if peak == sched.total_steps:
        return sched.max_lr
    u = (step - peak) / (sched.total_steps - peak)
    return fin + (sched.max_lr - fin) * 0.5 * (1.0 + math.cos(math.pi * u))
