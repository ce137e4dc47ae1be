"""Parameter updates over a tape's registry: SGD with momentum and AdamW.

AdamW (decoupled weight decay, lr 5e-4, decay 0.01) is the default
training optimizer; SGD is kept for the small overfitting oracles.
"""

from __future__ import annotations

import numpy as np

from .tensor import GradTape


class SGD:
    def __init__(self, tape: GradTape, lr: float = 1e-2, momentum: float = 0.9):
        self.tape = tape
        self.lr = lr
        self.momentum = momentum
        self._velocity: dict[str, np.ndarray] = {}

    def step(self) -> None:
        for name, p in self.tape.params.items():
            g = p.grad_or_zeros()
            v = self._velocity.get(name)
            if v is None:
                v = np.zeros_like(p.data)
                self._velocity[name] = v
            v *= self.momentum
            v += g
            p.data -= self.lr * v


class AdamW:
    def __init__(self, tape: GradTape, lr: float = 5e-4, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.tape = tape
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self._t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self._t
        bc2 = 1.0 - b2 ** self._t
        for name, p in self.tape.params.items():
            g = p.grad_or_zeros()
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= self.lr * (update + self.weight_decay * p.data)
