from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from ..core.exceptions import ShapeException
from .layers import Sequential, Tensor


@dataclass
class AdamState:
    lr: float = 0.001
    betas: Tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    t: int = 0
    m: Dict[str, Tensor] = field(default_factory=dict)
    v: Dict[str, Tensor] = field(default_factory=dict)


def adam_step(params: Dict[str, Tensor], grads: Dict[str, Tensor], state: AdamState):
    """One bias-corrected Adam update, applied to params in place."""
    state.t += 1
    beta1, beta2 = state.betas
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t

    for key, theta in params.items():
        g = grads[key]
        if g.shape != theta.shape:
            raise ShapeException(f"Gradient for {key} has shape {g.shape}, parameter {theta.shape}")
        if key not in state.m:
            state.m[key] = np.zeros_like(theta)
            state.v[key] = np.zeros_like(theta)

        state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * g
        state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * (g * g)
        m_hat = state.m[key] / bc1
        v_hat = state.v[key] / bc2
        theta -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


class Adam:
    def __init__(self, model: Sequential, lr: float = 0.001, betas: Tuple[float, float] = (0.9, 0.999),
                 epsilon: float = 1e-8):
        self.model = model
        self.state = AdamState(lr=lr, betas=betas, epsilon=epsilon)

    def step(self):
        adam_step(self.model.parameters(), self.model.gradients(), self.state)

    def zero_grad(self):
        self.model.zero_grad()
