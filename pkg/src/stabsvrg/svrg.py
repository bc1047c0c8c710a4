"""Minibatch SVRG: the variance-reduced estimator, full runs and random-stop epochs.

Cost model: one stochastic gradient is one evaluation of one ``grad f_i`` at
one point.  A full gradient costs ``n``; one estimator call costs ``2b``
because ``grad f_i(snapshot)`` is re-evaluated for every sampled index
rather than cached.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rng import Rng, random_stop_draw, sample_minibatch
from .trace import (
    STATUS_BUDGET,
    STATUS_COMPLETED,
    STATUS_DIVERGED,
    Recorder,
    RunTrace,
)


@dataclass
class SvrgConfig:
    """Epoch length ``m``, minibatch size ``b``, step size ``eta`` and epoch count ``S``."""

    m: int
    b: int
    eta: float
    S: int = 1

    def __post_init__(self):
        if self.m < 1 or self.b < 1:
            raise ValueError("m and b must be positive")
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise ValueError("eta must be finite and nonnegative")
        if self.S < 0:
            raise ValueError("S must be nonnegative")

    @property
    def decrease_regime(self) -> bool:
        """``b >= m**2``, the batch-size condition under which per-epoch decrease is guaranteed."""
        return self.b >= self.m ** 2


@dataclass
class EpochContext:
    snapshot: np.ndarray
    snapshot_gradient: np.ndarray
    shift: Optional[np.ndarray] = None


@dataclass
class GradCounter:
    count: int = 0

    def add(self, k: int) -> None:
        self.count += int(k)


def gradient_estimate(obj, x, ctx: EpochContext, batch, counter: GradCounter) -> np.ndarray:
    """``(1/b) sum_{i in batch} (grad f_i(x) - grad f_i(snapshot) + grad f(snapshot)) - shift``."""
    gx = obj.batch_gradients(batch, x)
    gs = obj.batch_gradients(batch, ctx.snapshot)
    counter.add(2 * len(batch))
    v = np.add.reduce(gx - gs, axis=0) / len(batch) + ctx.snapshot_gradient
    if ctx.shift is not None:
        v = v - ctx.shift
    return v


def _start(obj, x0):
    x = np.array(x0, dtype=float)
    if x.shape != (obj.d,):
        raise ValueError(f"x0 must have shape ({obj.d},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    return x


def svrg_run(
    obj,
    x0,
    config: SvrgConfig,
    rng: Rng,
    counter: Optional[GradCounter] = None,
    *,
    budget: Optional[int] = None,
    verbosity: str = "steps",
    record_iterates: bool = False,
) -> RunTrace:
    """Plain minibatch SVRG for ``config.S`` epochs of ``config.m`` steps.

    If ``budget`` is given, work stops before any full gradient or estimator
    call that would push the counter past it.  A non-finite iterate ends the
    run with status ``diverged``.
    """
    x = _start(obj, x0)
    counter = counter if counter is not None else GradCounter()
    batch_rng = rng.fork("minibatch")
    trace = RunTrace("svrg", seed=rng.seed)
    rec = Recorder(trace, obj, verbosity, record_iterates)
    n, m, b, eta = obj.n, config.m, config.b, config.eta
    step = 0
    trace.status = STATUS_COMPLETED

    def fits(cost):
        return budget is None or counter.count + cost <= budget

    for s in range(config.S):
        if not fits(n):
            trace.status = STATUS_BUDGET
            break
        g = obj.full_gradient(x)
        counter.add(n)
        gnorm = float(np.linalg.norm(g))
        rec.snapshot(step, x, gnorm, counter.count, s, False, 0.0, float("nan"))
        if not math.isfinite(gnorm):
            trace.status = STATUS_DIVERGED
            break
        ctx = EpochContext(x.copy(), g)
        for t in range(1, m + 1):
            if not fits(2 * b):
                trace.status = STATUS_BUDGET
                break
            batch = sample_minibatch(n, b, batch_rng)
            v = gradient_estimate(obj, x, ctx, batch, counter)
            x = x - eta * v
            step += 1
            rec.step(step, x, counter.count, s, False, 0.0, float("nan"))
            if not np.all(np.isfinite(x)):
                trace.status = STATUS_DIVERGED
                break
        if trace.status != STATUS_COMPLETED:
            break
    trace.final_x = x
    trace.sg_count = counter.count
    trace.meta.update({"m": m, "b": b, "eta": eta, "S": config.S, "budget": budget})
    return trace


def svrg_epoch(obj, x0, config: SvrgConfig, rng: Rng, counter: Optional[GradCounter] = None, *, shift=None):
    """One full epoch with snapshot ``x0``; returns the iterates ``x_0..x_m`` as an ``(m+1, d)`` array.

    Uses the same ``"minibatch"`` stream as :func:`svrg_epoch_random_stop`, so
    for equal ``rng`` the random-stop path is a prefix of this one.
    """
    x = _start(obj, x0)
    counter = counter if counter is not None else GradCounter()
    batch_rng = rng.fork("minibatch")
    g = obj.full_gradient(x)
    counter.add(obj.n)
    ctx = EpochContext(x.copy(), g, shift)
    path = np.empty((config.m + 1, obj.d))
    path[0] = x
    for t in range(1, config.m + 1):
        batch = sample_minibatch(obj.n, config.b, batch_rng)
        x = x - config.eta * gradient_estimate(obj, x, ctx, batch, counter)
        path[t] = x
        if not np.all(np.isfinite(x)):
            return path[: t + 1]
    return path


def svrg_epoch_random_stop(obj, x0, config: SvrgConfig, rng: Rng, counter: Optional[GradCounter] = None, *, shift=None):
    """One epoch that breaks after step ``t`` with probability ``1/(m - t + 1)``.

    Returns ``(x_stop, t_stop)``; ``t_stop`` is uniform on ``1..m``.  A
    non-finite iterate ends the epoch early and is returned as is.
    """
    x = _start(obj, x0)
    counter = counter if counter is not None else GradCounter()
    batch_rng = rng.fork("minibatch")
    stop_rng = rng.fork("stop")
    g = obj.full_gradient(x)
    counter.add(obj.n)
    ctx = EpochContext(x.copy(), g, shift)
    m = config.m
    for t in range(1, m + 1):
        batch = sample_minibatch(obj.n, config.b, batch_rng)
        x = x - config.eta * gradient_estimate(obj, x, ctx, batch, counter)
        if not np.all(np.isfinite(x)):
            return x, t
        if random_stop_draw(m, t, stop_rng):
            return x, t
    raise AssertionError("random stop must fire by t = m")  # pragma: no cover


__all__ = [
    "SvrgConfig",
    "EpochContext",
    "GradCounter",
    "gradient_estimate",
    "svrg_run",
    "svrg_epoch",
    "svrg_epoch_random_stop",
]
