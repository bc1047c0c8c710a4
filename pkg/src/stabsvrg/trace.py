"""Run traces: per-step rows, snapshot points and super-epoch records."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

STATUS_BUDGET = "budget_exhausted"
STATUS_DIVERGED = "diverged"
STATUS_COMPLETED = "completed"

EV_SNAPSHOT = "snapshot"
EV_STEP = "step"
EV_ENTRY = "entry"
EV_EXIT_DISTANCE = "exit:distance"
EV_EXIT_TMAX = "exit:t_max"
EV_STOP = "stop"

VERBOSITY = ("steps", "snapshots")


class TraceRow(NamedTuple):
    step: int
    f: float
    grad_norm: float  # nan unless the row is a snapshot
    sg_count: int
    epoch: int
    super_epoch: bool
    event: str
    shift_norm: float
    dist_to_anchor: float  # nan outside super epochs


@dataclass
class SuperEpochRecord:
    t_init: int
    entry_sg: int
    anchor: np.ndarray
    anchor_f: float
    anchor_grad_norm: float
    start: np.ndarray  # point after the perturbation
    shift_norm: float
    exit_step: Optional[int] = None
    exit_sg: Optional[int] = None
    exit_x: Optional[np.ndarray] = None
    exit_f: Optional[float] = None
    exit_distance: Optional[float] = None
    reason: Optional[str] = None  # "distance", "t_max" or None if the run ended inside

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [float(v) for v in a]

        return {
            "t_init": self.t_init,
            "entry_sg": self.entry_sg,
            "anchor": arr(self.anchor),
            "anchor_f": self.anchor_f,
            "anchor_grad_norm": self.anchor_grad_norm,
            "start": arr(self.start),
            "shift_norm": self.shift_norm,
            "exit_step": self.exit_step,
            "exit_sg": self.exit_sg,
            "exit_x": arr(self.exit_x),
            "exit_f": self.exit_f,
            "exit_distance": self.exit_distance,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SuperEpochRecord":
        d = dict(d)
        for key in ("anchor", "start", "exit_x"):
            if d.get(key) is not None:
                d[key] = np.array(d[key], dtype=float)
        return cls(**d)


@dataclass
class Snapshot:
    row: int
    step: int
    sg_count: int
    grad_norm: float
    x: np.ndarray


@dataclass
class RunTrace:
    algorithm: str
    seed: Optional[int] = None
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    super_epochs: list = field(default_factory=list)
    iterates: Optional[list] = None  # (step, x) pairs when requested
    final_x: Optional[np.ndarray] = None
    status: str = STATUS_COMPLETED
    domain_violation: bool = False
    sg_count: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        idx = TraceRow._fields.index(name)
        return np.array([r[idx] for r in self.rows])

    def step_rows(self):
        return [r for r in self.rows if r.event != EV_SNAPSHOT]


class Recorder:
    """Appends rows to a :class:`RunTrace` according to the verbosity level."""

    def __init__(self, trace: RunTrace, obj, verbosity: str = "steps", record_iterates: bool = False):
        if verbosity not in VERBOSITY:
            raise ValueError(f"verbosity must be one of {VERBOSITY}")
        self.trace = trace
        self.obj = obj
        self.every_step = verbosity == "steps"
        if record_iterates:
            trace.iterates = []

    def _check_domain(self, x):
        if not self.trace.domain_violation and not self.obj.in_domain(x):
            self.trace.domain_violation = True

    def snapshot(self, step, x, grad_norm, sg, epoch, active, shift_norm, dist):
        self._check_domain(x)
        tr = self.trace
        tr.snapshots.append(Snapshot(len(tr.rows), step, sg, grad_norm, x.copy()))
        tr.rows.append(
            TraceRow(step, self.obj.value(x), grad_norm, sg, epoch, active, EV_SNAPSHOT, shift_norm, dist)
        )

    def step(self, step, x, sg, epoch, active, shift_norm, dist, event=EV_STEP, force=False):
        self._check_domain(x)
        if self.trace.iterates is not None:
            self.trace.iterates.append((step, x.copy()))
        if self.every_step or force or event != EV_STEP:
            self.trace.rows.append(
                TraceRow(step, self.obj.value(x), float("nan"), sg, epoch, active, event, shift_norm, dist)
            )
