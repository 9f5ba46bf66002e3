"""
First-order parameter updates over named numpy parameters.

Both optimizers skip a parameter whose gradient contains NaN and report how
many were skipped.
"""
from __future__ import annotations

from typing import Dict, Mapping, Protocol, Tuple

import numpy as np


class Optimizer(Protocol):
    def step(
        self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]
    ) -> Tuple[Dict[str, np.ndarray], int]: ...


def _usable(grad: np.ndarray) -> bool:
    return not np.any(np.isnan(grad))


class GradientDescent:
    """``param <- param - lr * grad``."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params, grads):
        updated = dict(params)
        rejected = 0
        for name, grad in grads.items():
            if name not in params:
                continue
            if not _usable(grad):
                rejected += 1
                continue
            updated[name] = params[name] - self.learning_rate * grad
        return updated, rejected


class Adam:
    """Adam with bias-corrected first and second moment estimates."""

    def __init__(self, learning_rate: float = 1e-3, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self._mu: Dict[str, np.ndarray] = {}
        self._nu: Dict[str, np.ndarray] = {}
        self._count: Dict[str, int] = {}

    def step(self, params, grads):
        updated = dict(params)
        rejected = 0
        for name, grad in grads.items():
            if name not in params:
                continue
            if not _usable(grad):
                rejected += 1
                continue
            mu = self.b1 * self._mu.get(name, np.zeros_like(grad)) + (1 - self.b1) * grad
            nu = self.b2 * self._nu.get(name, np.zeros_like(grad)) + (1 - self.b2) * grad * grad
            count = self._count.get(name, 0) + 1
            self._mu[name], self._nu[name], self._count[name] = mu, nu, count
            mu_hat = mu / (1 - self.b1**count)
            nu_hat = nu / (1 - self.b2**count)
            updated[name] = params[name] - self.learning_rate * mu_hat / (np.sqrt(nu_hat) + self.eps)
        return updated, rejected
