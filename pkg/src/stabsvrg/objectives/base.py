"""Finite-sum objective interface.

An objective is ``f(x) = (1/n) sum_i f_i(x)`` over flat vectors ``x`` of
length ``d``.  Subclasses must provide per-component values and gradients;
the batched and averaged forms have loop-based defaults that concrete
objectives override with vectorized code.
"""
from __future__ import annotations

import abc
from typing import Optional

import numpy as np


class FiniteSumObjective(abc.ABC):
    """Base class for ``f(x) = (1/n) sum_i f_i(x)``.

    Attributes
    ----------
    n : int
        Number of components.
    d : int
        Dimension of the (flattened) variable.
    L, rho, rho_prime : float or None
        Declared gradient-Lipschitz constant of the components, Hessian-Lipschitz
        constant of the average, and Hessian-Lipschitz constant of the components.
        ``None`` when unknown.
    """

    n: int
    d: int
    L: Optional[float] = None
    rho: Optional[float] = None
    rho_prime: Optional[float] = None
    kind: str = "custom"

    @abc.abstractmethod
    def component_value(self, i: int, x: np.ndarray) -> float:
        ...

    @abc.abstractmethod
    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        ...

    def component_values(self, idx, x: np.ndarray) -> np.ndarray:
        return np.array([self.component_value(int(i), x) for i in idx], dtype=float)

    def batch_gradients(self, idx, x: np.ndarray) -> np.ndarray:
        """Stacked component gradients, shape ``(len(idx), d)``; duplicates are evaluated again."""
        return np.stack([self.component_gradient(int(i), x) for i in idx])

    def value(self, x: np.ndarray) -> float:
        return float(np.mean(self.component_values(range(self.n), x)))

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.batch_gradients(np.arange(self.n), x).mean(axis=0)

    def in_domain(self, x: np.ndarray) -> bool:
        """Whether ``x`` lies in the set where the declared constants hold."""
        return True

    def f_star(self) -> Optional[float]:
        """Known optimal value, if any."""
        return None

    def describe(self) -> dict:
        return {"kind": self.kind, "n": self.n, "d": self.d}


class ShiftedObjective(FiniteSumObjective):
    """``f_i(x) - <g, x - anchor>`` for a fixed vector ``g``.

    With ``g = grad f(anchor)`` the anchor becomes an exact first-order
    stationary point of the shifted average.  Hessians are unchanged, so the
    declared constants carry over.
    """

    kind = "shifted"

    def __init__(self, base: FiniteSumObjective, anchor, shift):
        self.base = base
        self.anchor = np.array(anchor, dtype=float)
        self.shift = np.array(shift, dtype=float)
        self.n = base.n
        self.d = base.d
        self.L = base.L
        self.rho = base.rho
        self.rho_prime = base.rho_prime

    @classmethod
    def at(cls, base: FiniteSumObjective, anchor) -> "ShiftedObjective":
        anchor = np.asarray(anchor, dtype=float)
        return cls(base, anchor, base.full_gradient(anchor))

    def _linear(self, x):
        return float(self.shift @ (x - self.anchor))

    def component_value(self, i, x):
        return self.base.component_value(i, x) - self._linear(x)

    def component_values(self, idx, x):
        return self.base.component_values(idx, x) - self._linear(x)

    def component_gradient(self, i, x):
        return self.base.component_gradient(i, x) - self.shift

    def batch_gradients(self, idx, x):
        return self.base.batch_gradients(idx, x) - self.shift

    def value(self, x):
        return self.base.value(x) - self._linear(x)

    def full_gradient(self, x):
        return self.base.full_gradient(x) - self.shift

    def in_domain(self, x):
        return self.base.in_domain(x)


def zero_sum_symmetric_noise(n: int, d: int, spread: float, rng) -> np.ndarray:
    """``n`` symmetric ``d x d`` matrices summing to zero, each of operator norm at most ``spread``.

    Symmetric Gaussians are centered across the ensemble and then rescaled so
    the largest operator norm equals ``spread``.
    """
    if spread < 0:
        raise ValueError("spread must be nonnegative")
    if n == 1 or spread == 0:
        return np.zeros((n, d, d))
    g = rng.normal((n, d, d))
    g = 0.5 * (g + np.swapaxes(g, 1, 2))
    g -= g.mean(axis=0)
    norms = np.linalg.norm(g, ord=2, axis=(1, 2))
    return (g / norms.max()) * spread
