"""Symmetric low-rank matrix sensing.

Observations ``b_i = <A_i, M*>`` of ``M* = U* U*^T`` with Gaussian sensing
matrices ``A_i``.  The objective over ``U`` (d x r, flattened row-major to a
vector of length ``d*r``) is

    f(U) = 1/(2n) sum_i (<A_i, U U^T> - b_i)^2,   f_i(U) = (<A_i, U U^T> - b_i)^2 / 2.

Throughout, ``S_i = A_i + A_i^T``; since ``U U^T`` is symmetric,
``<A_i, U U^T> = <S_i, U U^T> / 2``.
"""
from __future__ import annotations

import numpy as np

from .base import FiniteSumObjective

DOMAIN_RADIUS = 4.0
RIP_DELTA = 0.1


class MatrixSensingInstance(FiniteSumObjective):
    kind = "sensing"

    def __init__(self, A, U_star):
        A = np.array(A, dtype=float)
        U_star = np.array(U_star, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError("A must have shape (n, d, d)")
        if U_star.ndim != 2 or U_star.shape[0] != A.shape[1]:
            raise ValueError("U_star must have shape (d, r)")
        self.A = A
        self.n, self.dim = A.shape[0], A.shape[1]
        self.r = U_star.shape[1]
        self.d = self.dim * self.r
        self.U_star = U_star
        self.M_star = U_star @ U_star.T
        self.S = A + np.swapaxes(A, 1, 2)
        self._A_flat = A.reshape(self.n, -1)
        self.b = self._A_flat @ self.M_star.ravel()
        self.rho = 48.0 * (1.0 + RIP_DELTA)
        # rho' >= 3 lambda_max(S_i)^2 by the rank-one construction in hessian_gap_witness
        lam_max = np.linalg.eigvalsh(self.S)[:, -1]
        self.rho_prime = float(max(self.rho, 3.0 * np.max(lam_max) ** 2))
        self.L = None

    # reshaping ---------------------------------------------------------
    def to_matrix(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float).reshape(self.dim, self.r)

    def to_vector(self, U) -> np.ndarray:
        return np.asarray(U, dtype=float).reshape(-1)

    # measurements ------------------------------------------------------
    def measure(self, B) -> np.ndarray:
        """Stacked measurement vector ``(<A_1, B>, ..., <A_n, B>)``."""
        return self._A_flat @ np.asarray(B, dtype=float).ravel()

    def residuals(self, x) -> np.ndarray:
        U = self.to_matrix(x)
        return self.measure(U @ U.T) - self.b

    def bilinear(self, B, B2) -> float:
        """``B : H : B2 = (1/n) sum_i <A_i, B> <A_i, B2>``."""
        return float(np.mean(self.measure(B) * self.measure(B2)))

    # finite-sum interface ---------------------------------------------
    def component_value(self, i, x):
        U = self.to_matrix(x)
        res = np.sum(self.A[i] * (U @ U.T)) - self.b[i]
        return float(0.5 * res ** 2)

    def component_values(self, idx, x):
        U = self.to_matrix(x)
        idx = np.asarray(idx)
        res = self._A_flat[idx] @ (U @ U.T).ravel() - self.b[idx]
        return 0.5 * res ** 2

    def component_gradient(self, i, x):
        U = self.to_matrix(x)
        res = np.sum(self.A[i] * (U @ U.T)) - self.b[i]
        return (res * (self.S[i] @ U)).ravel()

    def batch_gradients(self, idx, x):
        U = self.to_matrix(x)
        res = self._A_flat[idx] @ (U @ U.T).ravel() - self.b[idx]
        G = self.S[idx] @ U
        return (res[:, None, None] * G).reshape(len(idx), self.d)

    def value(self, x):
        res = self.residuals(x)
        return float(0.5 * np.mean(res ** 2))

    def full_gradient(self, x):
        U = self.to_matrix(x)
        res = self.residuals(x)
        W = np.tensordot(res, self.S, axes=(0, 0)) / self.n
        return (W @ U).ravel()

    def in_domain(self, x):
        return bool(np.linalg.norm(self.to_matrix(x), ord=2) <= DOMAIN_RADIUS)

    def f_star(self):
        return 0.0

    def sample_point(self, rng, radius: float = 1.0) -> np.ndarray:
        """Random ``U`` with operator norm uniform on ``[0, radius]``, as a flat vector."""
        G = rng.normal((self.dim, self.r))
        G /= np.linalg.norm(G, ord=2)
        return (G * (radius * rng.uniform())).ravel()

    def describe(self):
        return {"kind": self.kind, "n": self.n, "d": self.dim, "r": self.r}

    # second-order structure ------------------------------------------
    def hessian_form(self, x, z, which="average") -> float:
        """Second directional derivative ``f''(U)[Z, Z]`` of the average or of component ``which``."""
        U = self.to_matrix(x)
        Z = self.to_matrix(z)
        if which == "average":
            sym = U @ Z.T + Z @ U.T
            return self.bilinear(sym, sym) + 2.0 * self.bilinear(U @ U.T - self.M_star, Z @ Z.T)
        i = int(which)
        S = self.S[i]
        return float(
            np.sum((U @ Z.T) * S) ** 2
            + 0.5 * np.sum((U @ U.T - self.M_star) * S) * np.sum((Z @ Z.T) * S)
        )


def matrix_sensing_make(d: int, r: int, n: int, rng, *, ground_truth=None) -> MatrixSensingInstance:
    """Gaussian sensing instance with ground truth normalized to unit operator norm.

    ``ground_truth`` (d x r) is optional; a Gaussian matrix is drawn otherwise.
    Either way it is rescaled so that ``||U*|| = 1``.
    """
    if d < 1 or not 1 <= r <= d or n < 1:
        raise ValueError(f"invalid dimensions d={d}, r={r}, n={n}")
    if ground_truth is None:
        U_star = rng.normal((d, r))
    else:
        U_star = np.array(ground_truth, dtype=float)
        if U_star.shape != (d, r):
            raise ValueError("ground_truth must be d x r")
    U_star = U_star / np.linalg.norm(U_star, ord=2)
    A = rng.normal((n, d, d))
    return MatrixSensingInstance(A, U_star)


def matrix_sensing_value(inst: MatrixSensingInstance, U) -> float:
    return inst.value(inst.to_vector(U))


def matrix_sensing_component_gradient(inst: MatrixSensingInstance, i: int, U) -> np.ndarray:
    """``(<A_i, U U^T> - b_i) (A_i + A_i^T) U`` as a d x r matrix."""
    if not 0 <= i < inst.n:
        raise ValueError(f"component index {i} out of range")
    return inst.component_gradient(i, inst.to_vector(U)).reshape(inst.dim, inst.r)


def matrix_sensing_hessian_form(inst: MatrixSensingInstance, U, Z, which="average") -> float:
    return inst.hessian_form(inst.to_vector(U), inst.to_vector(Z), which)


def rip_probe(inst: MatrixSensingInstance, rank_cap: int, trials: int, rng):
    """Monte-Carlo lower bounds on the restricted isometry deviation.

    Draws ``B = X Y^T`` with ``X, Y`` Gaussian ``d x rank_cap``, normalizes to
    unit Frobenius norm and returns ``(min, max)`` of ``B:H:B - 1``.  This
    bounds the RIP constant from below; it is not a certificate.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if rank_cap < 1:
        raise ValueError("rank_cap must be positive")
    devs = np.empty(trials)
    for k in range(trials):
        B = rng.normal((inst.dim, rank_cap)) @ rng.normal((inst.dim, rank_cap)).T
        B /= np.linalg.norm(B)
        devs[k] = inst.bilinear(B, B) - 1.0
    return float(devs.min()), float(devs.max())


def hessian_gap_witness(inst: MatrixSensingInstance, i: int, eps: float):
    """Finite-``eps`` version of the rank-one construction separating ``rho'`` from ``rho``.

    With ``S = A_i + A_i^T``, ``lam = lambda_max(S)`` and unit eigenvector ``v``,
    take ``U = Z = v e_1^T`` and ``V = U + eps v e_1^T``.  Returns
    ``([f_i''(V)[Z,Z] - f_i''(U)[Z,Z]] / eps, 3 lam**2)``; the first tends to the
    second as ``eps -> 0``.
    """
    w, vecs = np.linalg.eigh(inst.S[i])
    lam, v = w[-1], vecs[:, -1]
    U = np.zeros((inst.dim, inst.r))
    U[:, 0] = v
    V = U * (1.0 + eps)
    gap = inst.hessian_form(V.ravel(), U.ravel(), i) - inst.hessian_form(U.ravel(), U.ravel(), i)
    return gap / eps, 3.0 * lam ** 2
