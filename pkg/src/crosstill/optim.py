"""AdamW with decoupled weight decay and linear learning-rate warmup."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ContractError


@dataclass
class AdamW:
    """Adam with weight decay applied directly to the weights.

    The effective learning rate ramps linearly from zero over the first
    `warmup_fraction` of `total_steps` and then stays at `lr`. Steps are
    counted from zero: at step s the rate factor is min(1, s / warmup_steps),
    so e.g. step 5 of 100 total with fraction 0.1 trains at half rate.

    Weight decay touches only matrices (ndim >= 2); bias vectors, layer-norm
    parameters, and other 1-D tensors are exempt.
    """

    params: dict[str, Tensor]
    lr: float = 2e-5
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    total_steps: int = 1
    warmup_fraction: float = 0.1
    step_count: int = field(default=0, init=False)
    _m: dict[str, np.ndarray] = field(default_factory=dict, init=False, repr=False)
    _v: dict[str, np.ndarray] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.total_steps < 1:
            raise ContractError("total_steps must be at least 1")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ContractError("warmup_fraction must lie in [0, 1]")
        for name, p in self.params.items():
            if not p.requires_grad:
                raise ContractError(f"optimizer given frozen parameter {name!r}")
            self._m[name] = np.zeros_like(p.data)
            self._v[name] = np.zeros_like(p.data)

    def lr_at(self, step: int) -> float:
        """Effective learning rate at a zero-based step index."""
        warmup_steps = self.warmup_fraction * self.total_steps
        if warmup_steps <= 0:
            return self.lr
        return self.lr * min(1.0, step / warmup_steps)

    def step(self) -> float:
        """Apply one update from the accumulated gradients; returns the lr used."""
        if self.step_count >= self.total_steps:
            raise ContractError(
                f"optimizer stepped {self.step_count + 1} times but was sized for {self.total_steps}"
            )
        lr_t = self.lr_at(self.step_count)
        t = self.step_count + 1
        b1, b2 = self.betas
        bias1 = 1.0 - b1**t
        bias2 = 1.0 - b2**t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                raise ContractError(f"parameter {name!r} has no gradient; run backward first")
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            mhat = m / bias1
            vhat = v / bias2
            update = lr_t * mhat / (np.sqrt(vhat) + self.eps)
            if self.weight_decay > 0.0 and p.data.ndim >= 2:
                update = update + lr_t * self.weight_decay * p.data
            p.data -= update.astype(p.data.dtype)
        self.step_count += 1
        return lr_t
