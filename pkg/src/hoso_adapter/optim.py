"""SGD with classical momentum, per-parameter-group stepping, cosine schedule.

Weight decay is coupled (added to the gradient before the velocity update),
matching the convention of the mainstream framework optimizers. The ratio
logit is trained by a separate plain-SGD group: constant learning rate, no
momentum, no weight decay, so the bounded scalar is not pulled toward 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericsError


@dataclass
class SgdState:
    """Hyperparameters plus velocity buffers for one parameter group."""

    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    velocity: dict = field(default_factory=dict)

    def step_tensor(self, name: str, param: np.ndarray, grad: np.ndarray,
                    lr_now: float | None = None) -> None:
        """In-place momentum update of one tensor."""
        if not np.all(np.isfinite(grad)):
            raise NumericsError(f"non-finite gradient for tensor {name!r}")
        g = grad + self.weight_decay * param if self.weight_decay else grad
        if self.momentum:
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(param)
                self.velocity[name] = v
            v *= self.momentum
            v += g
        else:
            v = g
        param -= (self.lr if lr_now is None else lr_now) * v

    def step_scalar(self, name: str, value: float, grad: float,
                    lr_now: float | None = None) -> float:
        """Momentum update of one scalar; returns the new value."""
        if not math.isfinite(grad):
            raise NumericsError(f"non-finite gradient for scalar {name!r}")
        g = grad + self.weight_decay * value
        if self.momentum:
            v = self.momentum * self.velocity.get(name, 0.0) + g
            self.velocity[name] = v
        else:
            v = g
        return value - (self.lr if lr_now is None else lr_now) * v


def sgd_step(params: dict, grads: dict, state: SgdState, lr_now: float | None = None) -> None:
    """Step every tensor in ``params`` (name -> array) with matching grads."""
    for name, p in params.items():
        state.step_tensor(name, p, grads[name], lr_now)


def cosine_lr(step: int, total: int, base_lr: float) -> float:
    """base_lr * 0.5 * (1 + cos(pi * step / total)); anneals to exactly 0."""
    if total <= 0:
        raise ConfigError(f"schedule length must be positive, got {total}")
    if not 0 <= step <= total:
        raise ConfigError(f"step {step} outside [0, {total}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total))


@dataclass
class Schedule:
    """Learning-rate schedule over a fixed number of steps."""

    base_lr: float
    total_steps: int
    kind: str = "cosine"  # cosine | constant

    def __post_init__(self):
        if self.kind not in ("cosine", "constant"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.total_steps <= 0:
            raise ConfigError("total_steps must be positive")

    def lr(self, step: int) -> float:
        if self.kind == "constant":
            return self.base_lr
        return cosine_lr(step, self.total_steps, self.base_lr)
