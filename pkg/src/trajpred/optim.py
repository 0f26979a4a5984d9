"""Adam with decoupled weight decay, operating on named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


class NumericalError(RuntimeError):
    """A non-finite value reached the optimizer or the training loop."""


@dataclass
class AdamState:
    """Moment buffers and hyperparameters for one parameter group.

    ``lr`` is mutable so a schedule can adjust it between epochs. Weight decay
    is decoupled: it shrinks parameters directly instead of entering the
    gradient moments.
    """

    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState) -> dict[str, Tensor]:
    """One Adam update in place. Parameters absent from ``grads`` or with
    ``requires_grad`` off are left untouched (freeze contract)."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        if not p.requires_grad or name not in grads:
            continue
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay:
            p.data -= state.lr * state.weight_decay * p.data
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def schedule_lr(epoch: int, base_lr: float, drop_epoch: int | None,
                drop_factor: float = 0.1) -> float:
    """Step schedule: ``base_lr`` through ``drop_epoch``, decayed afterwards.

    Epochs are 1-based; with the reference settings (1e-3, drop at 32) epochs
    1..32 run at 1e-3 and later epochs at 1e-4.
    """
    if drop_epoch is not None and epoch > drop_epoch:
        return base_lr * drop_factor
    return base_lr
