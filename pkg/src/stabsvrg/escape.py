"""Perturbed SVRG and Stabilized SVRG.

Both algorithms run SVRG epochs and watch the snapshot gradient.  When it
drops below ``G_thresh`` outside a super epoch, the current point becomes the
anchor, the iterate is perturbed uniformly inside a ball of radius ``delta``
and a super epoch starts.  The super epoch ends once the iterate is
``L_thresh`` away from the anchor or ``T_max`` steps have elapsed.  Outside
super epochs every epoch stops at a uniformly random inner step.

Stabilized SVRG additionally subtracts ``grad f(anchor)`` from every gradient
estimate during a super epoch, i.e. it runs SVRG on
``f(x) - <grad f(anchor), x - anchor>``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .rng import Rng, random_stop_draw, sample_ball, sample_minibatch
from .svrg import EpochContext, GradCounter, _start, gradient_estimate
from .trace import (
    EV_ENTRY,
    EV_EXIT_DISTANCE,
    EV_EXIT_TMAX,
    EV_STOP,
    STATUS_BUDGET,
    STATUS_DIVERGED,
    Recorder,
    RunTrace,
    SuperEpochRecord,
)

VARIANTS = ("perturbed", "stabilized")


@dataclass
class EscapeConstants:
    """Multipliers standing in for the unspecified polylog factors of the parameter choices."""

    c_b: float = 1.0
    c_eta: float = 0.1
    c_delta: float = 0.1
    c_T: float = 40.0
    c_G: float = 1.0
    c_L: float = 1.0


@dataclass
class EscapeConfig:
    m: int
    b: int
    eta: float
    delta: float
    T_max: int
    G_thresh: float
    L_thresh: float
    budget: Optional[int] = None
    constants: EscapeConstants = field(default_factory=EscapeConstants)

    def __post_init__(self):
        if self.m < 1 or self.b < 1 or self.T_max < 1:
            raise ValueError("m, b and T_max must be positive")
        for name in ("eta", "G_thresh", "L_thresh"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite, got {val}")
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ValueError("delta must be finite and nonnegative")
        if self.L_thresh <= self.delta:
            raise ValueError("L_thresh must exceed delta")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if isinstance(self.constants, dict):
            self.constants = EscapeConstants(**self.constants)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SuperEpochState:
    active: bool
    anchor: Optional[np.ndarray]
    t_init: int
    v_shift: np.ndarray

    @classmethod
    def inactive(cls, d: int) -> "SuperEpochState":
        return cls(False, None, 0, np.zeros(d))

    def enter(self, anchor, t_init, shift):
        self.active = True
        self.anchor = anchor.copy()
        self.t_init = t_init
        self.v_shift = shift.copy()

    def leave(self):
        self.active = False
        self.v_shift = np.zeros_like(self.v_shift)


def _norm(v) -> float:
    return math.sqrt(float(v @ v))


def _ceil(x: float) -> int:
    # guard against 1000**(2/3) == 99.99999999999997 style round-off
    return max(1, math.ceil(x - 1e-9 * max(1.0, abs(x))))


def default_parameters(
    n: int,
    L: float,
    rho: float,
    rho_prime: float,
    epsilon: float,
    variant: str = "stabilized",
    constants: Optional[EscapeConstants] = None,
    budget: Optional[int] = None,
) -> EscapeConfig:
    """Hyperparameters from the asymptotic parameter choices with explicit constants.

    ``b = ceil(c_b n^(2/3))``, ``m = ceil(n/b)``, ``eta = c_eta/L``,
    ``T_max = ceil(c_T L / sqrt(rho eps))``, ``G = c_G eps``.  The radius and
    distance threshold depend on ``variant``:

    * stabilized: ``delta = c_delta min(sqrt(eps/rho), m sqrt(rho eps)/rho')``,
      ``L_thresh = c_L sqrt(eps/rho)``
    * perturbed: ``delta = c_delta min(rho^1.5 sqrt(eps) / max(rho, rho'/m)^2,
      (rho eps)^0.75 / (max(rho, rho'/m) sqrt(L)))``,
      ``L_thresh = c_L sqrt(eps rho) / max(rho, rho'/m)``
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not rho > 0:
        raise ValueError("rho must be positive")
    if not L > 0 or n < 1:
        raise ValueError("L and n must be positive")
    if rho_prime < rho:
        raise ValueError("rho_prime must be at least rho")
    c = constants or EscapeConstants()
    b = _ceil(c.c_b * n ** (2.0 / 3.0))
    m = _ceil(n / b)
    eta = c.c_eta / L
    T_max = _ceil(c.c_T * L / math.sqrt(rho * epsilon))
    G = c.c_G * epsilon
    if variant == "stabilized":
        delta = c.c_delta * min(math.sqrt(epsilon / rho), m * math.sqrt(rho * epsilon) / rho_prime)
        L_thresh = c.c_L * math.sqrt(epsilon / rho)
    else:
        big = max(rho, rho_prime / m)
        delta = c.c_delta * min(
            rho ** 1.5 * math.sqrt(epsilon) / big ** 2,
            rho ** 0.75 * epsilon ** 0.75 / (big * math.sqrt(L)),
        )
        L_thresh = c.c_L * math.sqrt(epsilon * rho) / big
    return EscapeConfig(m, b, eta, delta, T_max, G, L_thresh, budget, c)


def _escape_run(obj, x0, config: EscapeConfig, rng: Rng, counter, stabilize, verbosity, record_iterates):
    x = _start(obj, x0)
    counter = counter if counter is not None else GradCounter()
    pert_rng = rng.fork("perturbation")
    batch_rng = rng.fork("minibatch")
    stop_rng = rng.fork("stop")
    name = "stabilized" if stabilize else "perturbed"
    trace = RunTrace(name, seed=rng.seed)
    rec = Recorder(trace, obj, verbosity, record_iterates)
    n, m, b, eta = obj.n, config.m, config.b, config.eta
    budget = config.budget
    state = SuperEpochState.inactive(obj.d)
    current: Optional[SuperEpochRecord] = None
    step = 0
    epoch = 0
    status = None
    nan = float("nan")

    def fits(cost):
        return budget is None or counter.count + cost <= budget

    def dist():
        return _norm(x - state.anchor) if state.active else nan

    def shift_norm():
        return _norm(state.v_shift) if state.active else 0.0

    while status is None:
        if not fits(n):
            status = STATUS_BUDGET
            break
        g = obj.full_gradient(x)
        counter.add(n)
        gnorm = _norm(g)
        rec.snapshot(step, x, gnorm, counter.count, epoch, state.active, shift_norm(), dist())
        if not math.isfinite(gnorm):
            status = STATUS_DIVERGED
            break
        if not state.active and gnorm <= config.G_thresh:
            state.enter(x, step, g if stabilize else np.zeros(obj.d))
            anchor_f = obj.value(x)
            x = sample_ball(x, config.delta, pert_rng)
            current = SuperEpochRecord(
                t_init=step,
                entry_sg=counter.count,
                anchor=state.anchor.copy(),
                anchor_f=anchor_f,
                anchor_grad_norm=gnorm,
                start=x.copy(),
                shift_norm=shift_norm(),
            )
            trace.super_epochs.append(current)
            rec.step(step, x, counter.count, epoch, True, shift_norm(), dist(), event=EV_ENTRY)
            # the perturbed point is the snapshot of this epoch
            if not fits(n):
                status = STATUS_BUDGET
                break
            g = obj.full_gradient(x)
            counter.add(n)
            rec.snapshot(step, x, _norm(g), counter.count, epoch, True, shift_norm(), dist())
        ctx = EpochContext(x.copy(), g, state.v_shift.copy() if state.active and stabilize else None)
        for t in range(1, m + 1):
            if not fits(2 * b):
                status = STATUS_BUDGET
                break
            batch = sample_minibatch(n, b, batch_rng)
            v = gradient_estimate(obj, x, ctx, batch, counter)
            x = x - eta * v
            step += 1
            if not np.isfinite(x).all():
                rec.step(step, x, counter.count, epoch, state.active, shift_norm(), nan)
                status = STATUS_DIVERGED
                break
            if state.active:
                r = dist()
                reason = None
                if r >= config.L_thresh:
                    reason = "distance"
                elif step - state.t_init >= config.T_max:
                    reason = "t_max"
                if reason is None:
                    rec.step(step, x, counter.count, epoch, True, shift_norm(), r)
                    continue
                current.exit_step = step
                current.exit_sg = counter.count
                current.exit_x = x.copy()
                current.exit_f = obj.value(x)
                current.exit_distance = r
                current.reason = reason
                state.leave()
                ev = EV_EXIT_DISTANCE if reason == "distance" else EV_EXIT_TMAX
                rec.step(step, x, counter.count, epoch, False, shift_norm(), nan, event=ev)
                break
            if random_stop_draw(m, t, stop_rng):
                rec.step(step, x, counter.count, epoch, False, 0.0, nan, event=EV_STOP)
                break
            rec.step(step, x, counter.count, epoch, False, 0.0, nan)
        epoch += 1

    trace.status = status
    trace.final_x = x
    trace.sg_count = counter.count
    trace.meta.update({"config": config.to_dict(), "steps": step, "epochs": epoch})
    return trace


def perturbed_svrg(
    obj,
    x0,
    config: EscapeConfig,
    rng: Rng,
    counter: Optional[GradCounter] = None,
    *,
    verbosity: str = "steps",
    record_iterates: bool = False,
) -> RunTrace:
    """Perturbed SVRG, run until the stochastic-gradient budget is exhausted (or divergence)."""
    if config.budget is None:
        raise ValueError("escape runs need a finite budget")
    return _escape_run(obj, x0, config, rng, counter, False, verbosity, record_iterates)


def stabilized_svrg(
    obj,
    x0,
    config: EscapeConfig,
    rng: Rng,
    counter: Optional[GradCounter] = None,
    *,
    verbosity: str = "steps",
    record_iterates: bool = False,
) -> RunTrace:
    """Stabilized SVRG: as :func:`perturbed_svrg` with the anchor gradient subtracted inside super epochs."""
    if config.budget is None:
        raise ValueError("escape runs need a finite budget")
    return _escape_run(obj, x0, config, rng, counter, True, verbosity, record_iterates)


@dataclass
class SuperEpochOutcome:
    kind: str  # "escaped_distance", "hit_T_max" or "end_of_run"
    function_drop: float  # f(exit) - f(anchor)
    length: int


def super_epoch_outcome(trace: RunTrace, entry_index: int, obj=None) -> SuperEpochOutcome:
    """Classify how super epoch ``entry_index`` of ``trace`` ended and report ``f(x_T) - f(anchor)``.

    A super epoch still open at the end of the run is reported as
    ``end_of_run``; its drop is measured at the final point, which needs ``obj``.
    """
    if not isinstance(entry_index, (int, np.integer)) or not 0 <= entry_index < len(trace.super_epochs):
        raise ValueError(f"{entry_index} is not a recorded super-epoch entry")
    rec = trace.super_epochs[entry_index]
    if rec.reason is None:
        if obj is None:
            return SuperEpochOutcome("end_of_run", float("nan"), -1)
        final_step = trace.meta.get("steps", rec.t_init)
        return SuperEpochOutcome("end_of_run", obj.value(trace.final_x) - rec.anchor_f, final_step - rec.t_init)
    kind = "escaped_distance" if rec.reason == "distance" else "hit_T_max"
    return SuperEpochOutcome(kind, rec.exit_f - rec.anchor_f, rec.exit_step - rec.t_init)
