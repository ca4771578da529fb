"""Adam with decoupled weight decay, and the Noam learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment accumulators, zero-initialized on first use."""

    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              weight_decay: float = 0.0) -> None:
    """One update over every parameter that has a gradient.

    Weight decay is decoupled: parameters shrink by lr * wd * param before
    the moment-based update, so decay never enters the moments.
    """
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        if name not in params:
            raise ValueError(f"gradient for unknown parameter {name}")
        p = params[name]
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {name} {p.data.shape}"
            )
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        if m.shape != p.data.shape:
            raise ValueError(f"optimizer state shape mismatch for {name}")
        if weight_decay != 0.0:
            p.data -= np.float32(lr * weight_decay) * p.data
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data -= np.float32(lr) * update.astype(p.data.dtype, copy=False)


def collect_grads(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Pull accumulated gradients off the leaves and clear them."""
    grads = {}
    for name, p in params.items():
        if p.grad is not None:
            grads[name] = p.grad
            p.grad = None
    return grads


def noam_lr(step: int, warmup_steps: int, d_model: int) -> float:
    """Linear warmup then inverse-sqrt decay; peak at step == warmup_steps."""
    if step < 1:
        raise ValueError(f"schedule step must be >= 1, got {step}")
    if warmup_steps < 1 or d_model < 1:
        raise ValueError(f"warmup_steps and d_model must be >= 1, got {warmup_steps}, {d_model}")
    return d_model ** -0.5 * min(step ** -0.5, step * warmup_steps ** -1.5)
