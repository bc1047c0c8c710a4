"""Two-dimensional saddle that is bounded below.

``f(x) = x1**2/2 - gamma*x2**2/2 + x2**4/4`` has a strict saddle at the origin
(Hessian ``diag(1, -gamma)``) and global minima at ``(0, +-sqrt(gamma))`` with
value ``-gamma**2/4``.  It is split into ``n`` components by adding zero-sum
quadratic noise ``x^T E_i x / 2``.
"""
from __future__ import annotations

import math

import numpy as np

from .base import FiniteSumObjective, zero_sum_symmetric_noise


class BoundedSaddle2D(FiniteSumObjective):
    kind = "saddle"
    d = 2

    def __init__(self, gamma: float, noise):
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        self.gamma = float(gamma)
        self.E = np.array(noise, dtype=float)
        if self.E.ndim != 3 or self.E.shape[1:] != (2, 2):
            raise ValueError("noise must have shape (n, 2, 2)")
        self.n = self.E.shape[0]
        self.spread = float(np.linalg.norm(self.E, ord=2, axis=(1, 2)).max())
        # admissible domain ||x|| <= 3 sqrt(gamma); on it |d^2f/dx2^2| <= 26 gamma
        self.radius = 3.0 * math.sqrt(self.gamma)
        self.L = max(1.0, 26.0 * self.gamma) + self.spread
        self.rho = 6.0 * self.radius
        self.rho_prime = self.rho

    def _f(self, x):
        return 0.5 * x[0] ** 2 - 0.5 * self.gamma * x[1] ** 2 + 0.25 * x[1] ** 4

    def _grad(self, x):
        return np.array([x[0], -self.gamma * x[1] + x[1] ** 3])

    def hessian(self, x) -> np.ndarray:
        """Hessian of the average function."""
        return np.diag([1.0, -self.gamma + 3.0 * x[1] ** 2])

    def component_value(self, i, x):
        return float(self._f(x) + 0.5 * x @ self.E[i] @ x)

    def component_values(self, idx, x):
        Ex = self.E[np.asarray(idx)] @ x
        return self._f(x) + 0.5 * Ex @ x

    def component_gradient(self, i, x):
        return self._grad(x) + self.E[i] @ x

    def batch_gradients(self, idx, x):
        return self._grad(x) + self.E[idx] @ x

    def value(self, x):
        return float(self._f(x))

    def full_gradient(self, x):
        return self._grad(x)

    def in_domain(self, x):
        return bool(np.linalg.norm(x) <= self.radius)

    def f_star(self):
        return -0.25 * self.gamma ** 2

    def minimizers(self) -> np.ndarray:
        s = math.sqrt(self.gamma)
        return np.array([[0.0, s], [0.0, -s]])

    def describe(self):
        return {"kind": self.kind, "n": self.n, "d": 2, "gamma": self.gamma}


def bounded_saddle_make(gamma: float, n: int, spread: float, rng) -> BoundedSaddle2D:
    if n < 1:
        raise ValueError("n must be positive")
    return BoundedSaddle2D(gamma, zero_sum_symmetric_noise(n, 2, spread, rng))
