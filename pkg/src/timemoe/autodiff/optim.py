"""Gradient-descent optimizers over lists of (name, Tensor) parameters."""

from __future__ import annotations

import numpy as np


class SGD:
    """Plain gradient descent with classical momentum."""

    def __init__(self, params, lr: float = 1e-3, momentum: float = 0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self._velocity = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self):
        for name, p in self.params:
            if p.grad is None:
                continue
            v = self._velocity[name]
            v *= self.momentum
            v -= self.lr * p.grad
            p.data += v

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None


class Adam:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self._m = {name: np.zeros_like(p.data) for name, p in self.params}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params}
        self._t = 0

    def step(self):
        self._t += 1
        b1t = 1.0 - self.b1 ** self._t
        b2t = 1.0 - self.b2 ** self._t
        for name, p in self.params:
            if p.grad is None:
                continue
            m, v = self._m[name], self._v[name]
            m *= self.b1
            m += (1 - self.b1) * p.grad
            v *= self.b2
            v += (1 - self.b2) * p.grad * p.grad
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None
