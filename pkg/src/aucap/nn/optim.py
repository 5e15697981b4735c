"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GraphStateError
from .tensor import Parameter


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def zero_grads(params: list[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def adam_step(params: list[Parameter], state: AdamState) -> None:
    """Apply one Adam update and clear the gradients.

    Raises if any parameter has not received a gradient since the last step,
    which catches a step issued before backward.
    """
    stale = [p.name for p in params if not p.grad_ready]
    if stale:
        raise GraphStateError(f"adam_step before backward for: {', '.join(stale)}")
    state.step += 1
    t = state.step
    scale = state.learning_rate * np.sqrt(1.0 - state.beta2**t) / (1.0 - state.beta1**t)
    for p in params:
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.data)
        v = state.v.get(p.name)
        if v is None:
            v = state.v[p.name] = np.zeros_like(p.data)
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * p.grad**2
        p.data -= scale * m / (np.sqrt(v) + state.eps)
        p.zero_grad()
