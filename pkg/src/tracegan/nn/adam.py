"""Adam with bias correction over a named parameter dict.

Parameters are updated in place (layers hold the same arrays), so one
optimizer instance owns one network's weights. Moments start at zero and the
step counter increments by exactly one per ``step`` call.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError


class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for {name} at optimizer step {self.t}")
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
