from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from .autograd import Value


@dataclass
class AdamState:
    """Bias-corrected Adam. Moments are keyed by position in the parameter list."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[int, np.ndarray] = field(default_factory=dict)
    v: Dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: Sequence[Value]) -> None:
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for k, param in enumerate(params):
        g = param.grad
        if k not in state.m:
            state.m[k] = np.zeros_like(param.data)
            state.v[k] = np.zeros_like(param.data)
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
