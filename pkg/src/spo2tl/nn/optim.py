"""Adam with per-parameter bias correction."""
from __future__ import annotations

import numpy as np

from ..exceptions import ShapeError
from .params import group_of


class Adam:
    """Adam optimizer.

    State is kept per parameter name, including its own step count, so a group
    that is unfrozen mid-training starts with fresh bias correction.
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = {}
        self.steps = 0

    def step(self, params, grads) -> None:
        """Update trainable parameters in place from ``grads``."""
        self.steps += 1
        for name, g in grads.items():
            if not params.trainable[group_of(name)]:
                continue
            theta = params.arrays[name]
            if g.shape != theta.shape:
                raise ShapeError(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
            if name not in self.m:
                self.m[name] = np.zeros_like(theta)
                self.v[name] = np.zeros_like(theta)
                self.t[name] = 0
            self.t[name] += 1
            t = self.t[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        params.bump()
