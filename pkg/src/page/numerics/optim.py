from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff
from .autodiff import Tensor


class OptimizerError(RuntimeError):
    pass


class Optimizer:
    """Base class: owns the parameter list and the step counter."""

    def __init__(self, params: Sequence[Tensor], lr: float):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.step_count = 0
        self._seen_generation = autodiff.backward_generation()

    def zero_grad(self) -> None:
        autodiff.zero_grads(self.params)

    def step(self) -> None:
        gen = autodiff.backward_generation()
        if gen == self._seen_generation:
            raise OptimizerError("optimizer step requested before any backward pass")
        self._seen_generation = gen
        self.step_count += 1
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self._update(i, p, g)
        self.zero_grad()

    def _update(self, i: int, p: Tensor, g: np.ndarray) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    """Plain gradient descent: ``w -= lr * g``."""

    def _update(self, i, p, g):
        p.data -= self.lr * g


class Adam(Optimizer):
    def __init__(self, params, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def _update(self, i, p, g):
        m, v = self.m[i], self.v[i]
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        m_hat = m / (1.0 - self.beta1 ** self.step_count)
        v_hat = v / (1.0 - self.beta2 ** self.step_count)
        p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, params, lr: float) -> Optimizer:
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer {kind!r}")
