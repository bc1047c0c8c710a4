"""Seedable randomness shared by every algorithm in the package.

All draws go through :class:`Rng`, a thin wrapper around numpy's PCG64
generator.  Component streams (perturbation, minibatch, stop draw, ...) are
forked by hashing ``(seed, tag)`` so that adding draws to one component never
shifts the sequence seen by another.

Component indices are 0-based throughout the package.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np

_MASK64 = (1 << 64) - 1


def _derive_seed(seed: int, tag: str) -> int:
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """Deterministic random stream identified by a 64-bit seed.

    Parameters
    ----------
    seed : int
        Any integer; reduced modulo 2**64.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def fork(self, tag: str) -> "Rng":
        """Independent child stream. Depends only on ``(seed, tag)``, not on draws made so far."""
        return Rng(_derive_seed(self.seed, tag))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def __repr__(self):
        return f"Rng(seed={self.seed})"


def sample_ball(center, radius: float, rng: Rng) -> np.ndarray:
    """Return ``center + xi`` with ``xi`` uniform on the closed ball of the given radius.

    A Gaussian direction is normalized and scaled by ``radius * U**(1/d)``,
    which gives the exact uniform law in any dimension without rejection.
    """
    center = np.asarray(center, dtype=float)
    if center.ndim != 1 or center.size < 1:
        raise ValueError("center must be a non-empty vector")
    if not np.all(np.isfinite(center)):
        raise ValueError("center must be finite")
    if not math.isfinite(radius) or radius < 0:
        raise ValueError(f"radius must be finite and nonnegative, got {radius}")
    d = center.size
    direction = rng.normal(d)
    u = rng.uniform()
    if radius == 0:
        return center.copy()
    norm = np.linalg.norm(direction)
    while norm == 0.0:  # probability zero, kept for safety
        direction = rng.normal(d)
        norm = np.linalg.norm(direction)
    xi = direction * (radius * u ** (1.0 / d) / norm)
    out = center + xi
    # guard against round-off pushing a boundary draw outside the ball
    dist = np.linalg.norm(out - center)
    if dist > radius:
        out = center + (out - center) * (radius / dist)
    return out


def sample_minibatch(n: int, b: int, rng: Rng) -> np.ndarray:
    """Multiset of ``b`` indices drawn i.i.d. uniformly from ``{0, ..., n-1}`` (duplicates allowed)."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if b < 1:
        raise ValueError(f"b must be positive, got {b}")
    return rng.integers(0, n, size=b)


def random_stop_draw(m: int, t: int, rng: Rng) -> bool:
    """Break after inner step ``t`` of an ``m``-step epoch with probability ``1/(m - t + 1)``.

    Applied at every ``t = 1..m`` this makes the stopping index uniform on ``1..m``.
    """
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    if not 1 <= t <= m:
        raise ValueError(f"t must lie in [1, {m}], got {t}")
    return bool(rng.uniform() * (m - t + 1) < 1.0)
