"""Ensemble of quadratics ``f_i(x) = 0.5 x^T H_i x + g^T x``.

Every component is quadratic, so individual Hessians are constant and the
individual Hessian-Lipschitz constant is exactly zero.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .base import FiniteSumObjective, zero_sum_symmetric_noise


class QuadraticEnsemble(FiniteSumObjective):
    kind = "quadratic"

    def __init__(self, hessians, linear=None):
        H = np.array(hessians, dtype=float)
        if H.ndim != 3 or H.shape[1] != H.shape[2]:
            raise ValueError("hessians must have shape (n, d, d)")
        if not np.allclose(H, np.swapaxes(H, 1, 2), rtol=0, atol=1e-12):
            raise ValueError("hessians must be symmetric")
        self.H = H
        self.n, self.d = H.shape[0], H.shape[1]
        self.g = np.zeros(self.d) if linear is None else np.array(linear, dtype=float)
        if self.g.shape != (self.d,):
            raise ValueError("linear term must have length d")
        self.H_mean = H.mean(axis=0)
        self.L = float(np.linalg.norm(H, ord=2, axis=(1, 2)).max())
        self.rho = 0.0
        self.rho_prime = 0.0

    def mean_spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.H_mean)

    def component_value(self, i, x):
        return float(0.5 * x @ self.H[i] @ x + self.g @ x)

    def component_values(self, idx, x):
        Hx = np.einsum("kij,j->ki", self.H[np.asarray(idx)], x)
        return 0.5 * Hx @ x + self.g @ x

    def component_gradient(self, i, x):
        return self.H[i] @ x + self.g

    def batch_gradients(self, idx, x):
        return np.einsum("kij,j->ki", self.H[idx], x) + self.g

    def value(self, x):
        return float(0.5 * x @ self.H_mean @ x + self.g @ x)

    def full_gradient(self, x):
        return self.H_mean @ x + self.g

    def describe(self):
        return {"kind": self.kind, "n": self.n, "d": self.d}


def quadratic_ensemble_make(
    d: int,
    n: int,
    gamma: float,
    spread: float,
    rng,
    *,
    top: float = 1.0,
    mean_hessian=None,
    linear=None,
    L_cap: Optional[float] = None,
) -> QuadraticEnsemble:
    """Random quadratic ensemble whose mean Hessian has smallest eigenvalue ``-gamma``.

    The mean Hessian is ``Q diag(-gamma, lam_2, ...) Q^T`` with ``lam_k``
    uniform on ``[-gamma, top]`` and ``Q`` Haar-random, unless ``mean_hessian``
    is given explicitly.  Components are ``H_mean + N_i`` where the ``N_i`` are
    symmetric, sum to zero and have operator norm at most ``spread``.

    Raises
    ------
    ValueError
        On bad dimensions, or if ``L_cap`` is given and some ``||H_i||``
        exceeds it.
    """
    if d < 2 or n < 1:
        raise ValueError(f"need d >= 2 and n >= 1, got d={d}, n={n}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if mean_hessian is None:
        lam = np.concatenate([[-gamma], rng.uniform(d - 1) * (top + gamma) - gamma])
        q, r = np.linalg.qr(rng.normal((d, d)))
        q = q * np.sign(np.diag(r))
        H_mean = (q * lam) @ q.T
        H_mean = 0.5 * (H_mean + H_mean.T)
    else:
        H_mean = np.array(mean_hessian, dtype=float)
        if H_mean.shape != (d, d):
            raise ValueError("mean_hessian must be d x d")
    noise = zero_sum_symmetric_noise(n, d, spread, rng)
    H = H_mean[None, :, :] + noise
    obj = QuadraticEnsemble(H, linear)
    if L_cap is not None and obj.L > L_cap:
        raise ValueError(f"individual gradient Lipschitz constant {obj.L:.4g} exceeds cap {L_cap}")
    return obj
