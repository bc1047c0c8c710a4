"""Seeded experiment execution, trace persistence and comparison tables."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..escape import perturbed_svrg, stabilized_svrg, super_epoch_outcome
from ..rng import Rng
from ..svrg import svrg_run
from ..trace import (
    STATUS_DIVERGED,
    RunTrace,
    Snapshot,
    SuperEpochRecord,
    TraceRow,
)
from ..verify import SECOND_ORDER, certify
from .spec import ExperimentSpec, SpecError

log = logging.getLogger(__name__)

CSV_COLUMNS = ["step", "f", "grad_norm_snapshot", "sg_count", "epoch", "super_epoch_flag", "event"]
TRACE_FORMAT = "stabsvrg-trace"
TRACE_VERSION = 1


def run_one(spec: ExperimentSpec, seed: int, obj=None) -> RunTrace:
    """Execute one seed of ``spec``; ``obj`` may be passed to reuse a built instance."""
    obj = obj if obj is not None else spec.objective.build()
    config = spec.make_config(obj)
    x0 = spec.make_x0(obj, seed)
    rng = Rng(seed)
    if spec.algorithm == "svrg":
        trace = svrg_run(obj, x0, config, rng, budget=spec.budget, verbosity=spec.verbosity)
    elif spec.algorithm == "perturbed":
        trace = perturbed_svrg(obj, x0, config, rng, verbosity=spec.verbosity)
    else:
        trace = stabilized_svrg(obj, x0, config, rng, verbosity=spec.verbosity)
    trace.seed = seed
    trace.meta["spec_hash"] = spec.spec_hash()
    return trace


def _worker(args):
    spec_dict, seed = args
    return run_one(ExperimentSpec.from_dict(spec_dict), seed)


def run(spec: ExperimentSpec, out_dir=None, fmt: str = "structured", workers: int = 1) -> list:
    """Run every seed of ``spec``; with ``out_dir`` also write one trace file per seed."""
    spec.validate()
    obj = spec.objective.build()
    spec.make_config(obj)  # fail before any compute
    if workers > 1 and len(spec.seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_worker, [(spec.to_dict(), s) for s in spec.seeds]))
    else:
        traces = [run_one(spec, s, obj) for s in spec.seeds]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ext = "csv" if fmt == "csv" else "json"
        for tr in traces:
            export_trace(tr, out / f"{spec.algorithm}_seed{tr.seed}.{ext}", fmt, spec)
    return traces


# certification along traces ----------------------------------------------

def first_certified(trace: RunTrace, obj, epsilon: float, rho: float, seed: int = 0) -> Optional[Snapshot]:
    """Earliest snapshot point certified as an epsilon-second-order stationary point, or ``None``.

    Snapshots whose recorded gradient norm already exceeds ``epsilon`` are
    skipped without recomputation.  The eigenvalue search uses an RNG forked
    from ``seed`` and the snapshot's step index.
    """
    base = Rng(seed).fork("certify")
    for snap in trace.snapshots:
        if not snap.grad_norm <= epsilon:
            continue
        rng = base.fork(str(snap.row))
        report = certify(obj, snap.x, epsilon, rho, rng)
        log.debug("certify row=%d seed=%d verdict=%s", snap.row, rng.seed, report.verdict)
        if report.verdict == SECOND_ORDER:
            return snap
    return None


@dataclass
class CompareRow:
    algorithm: str
    runs: int
    certified: int
    mean_sg_to_sosp: float
    escape_rate: float
    mean_final_f: float

    def as_tuple(self):
        return (self.algorithm, self.runs, self.certified, self.mean_sg_to_sosp, self.escape_rate, self.mean_final_f)


def summarize(algorithm: str, traces, obj, epsilon: float, rho: float) -> CompareRow:
    """Aggregate traces of one algorithm.

    ``escape_rate`` is the fraction of runs whose first super epoch exited by
    the distance condition (``nan`` when no run entered a super epoch).
    """
    hits = [first_certified(tr, obj, epsilon, rho, seed=tr.seed or 0) for tr in traces]
    sg = [h.sg_count for h in hits if h is not None]
    first = [super_epoch_outcome(tr, 0, obj).kind for tr in traces if tr.super_epochs]
    escape = float(np.mean([k == "escaped_distance" for k in first])) if first else float("nan")
    finals = [obj.value(tr.final_x) for tr in traces]
    return CompareRow(
        algorithm,
        len(traces),
        len(sg),
        float(np.mean(sg)) if sg else float("nan"),
        escape,
        float(np.mean(finals)),
    )


def compare(specs, out_dir=None) -> list:
    """One :class:`CompareRow` per spec; all specs must describe the same objective instance."""
    if not specs:
        raise ValueError("no specs to compare")
    ref = specs[0].objective
    for s in specs[1:]:
        if s.objective != ref:
            raise ValueError("all specs must share the objective instance")
    obj = ref.build()
    rows = []
    for s in specs:
        traces = run(s, out_dir)
        rho = obj.rho if obj.rho and obj.rho > 0 else 1.0
        rows.append(summarize(s.algorithm, traces, obj, s.epsilon, rho))
    return rows


def format_table(rows) -> str:
    head = ("algorithm", "runs", "certified", "mean_sg_to_sosp", "escape_rate", "mean_final_f")
    lines = ["\t".join(head)]
    for r in rows:
        lines.append("\t".join(_fmt(v) for v in r.as_tuple()))
    return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


# persistence ------------------------------------------------------------

def _f(v):
    return None if v is None else float(v)


def export_trace(trace: RunTrace, path, fmt: str = "structured", spec: Optional[ExperimentSpec] = None) -> Path:
    """Write ``trace`` as CSV (one row per record) or as JSON embedding the spec."""
    path = Path(path)
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(CSV_COLUMNS)
                for r in trace.rows:
                    gn = "" if math.isnan(r.grad_norm) else repr(float(r.grad_norm))
                    w.writerow([r.step, repr(float(r.f)), gn, r.sg_count, r.epoch, int(r.super_epoch), r.event])
        elif fmt == "structured":
            doc = {
                "format": TRACE_FORMAT,
                "version": TRACE_VERSION,
                "algorithm": trace.algorithm,
                "seed": trace.seed,
                "status": trace.status,
                "domain_violation": trace.domain_violation,
                "sg_count": trace.sg_count,
                "spec": spec.to_dict() if spec is not None else None,
                "spec_hash": spec.spec_hash() if spec is not None else trace.meta.get("spec_hash"),
                "columns": list(TraceRow._fields),
                "rows": [
                    [r.step, float(r.f), None if math.isnan(r.grad_norm) else float(r.grad_norm), r.sg_count,
                     r.epoch, bool(r.super_epoch), r.event, float(r.shift_norm),
                     None if math.isnan(r.dist_to_anchor) else float(r.dist_to_anchor)]
                    for r in trace.rows
                ],
                "snapshots": [
                    {"row": s.row, "step": s.step, "sg_count": s.sg_count, "grad_norm": _f(s.grad_norm),
                     "x": [float(v) for v in s.x]}
                    for s in trace.snapshots
                ],
                "super_epochs": [se.to_dict() for se in trace.super_epochs],
                "final_x": None if trace.final_x is None else [float(v) for v in trace.final_x],
                "meta": trace.meta,
            }
            path.write_text(json.dumps(doc, sort_keys=True, default=_json_default))
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"failed writing trace to {path}: {exc}") from exc
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def load_trace(path):
    """Read a structured trace; returns ``(trace, spec or None)``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read trace {path}: {exc}") from exc
    if doc.get("format") != TRACE_FORMAT or doc.get("version") != TRACE_VERSION:
        raise SpecError(f"{path}: not a version-{TRACE_VERSION} trace file")
    nan = float("nan")
    rows = [
        TraceRow(r[0], r[1], nan if r[2] is None else r[2], r[3], r[4], r[5], r[6], r[7], nan if r[8] is None else r[8])
        for r in doc["rows"]
    ]
    snaps = [
        Snapshot(s["row"], s["step"], s["sg_count"], nan if s["grad_norm"] is None else s["grad_norm"], np.array(s["x"]))
        for s in doc["snapshots"]
    ]
    trace = RunTrace(
        algorithm=doc["algorithm"],
        seed=doc["seed"],
        rows=rows,
        snapshots=snaps,
        super_epochs=[SuperEpochRecord.from_dict(d) for d in doc["super_epochs"]],
        final_x=None if doc["final_x"] is None else np.array(doc["final_x"]),
        status=doc["status"],
        domain_violation=doc["domain_violation"],
        sg_count=doc["sg_count"],
        meta=doc["meta"],
    )
    spec = ExperimentSpec.from_dict(doc["spec"]) if doc.get("spec") else None
    return trace, spec


def all_diverged(traces) -> bool:
    return bool(traces) and all(t.status == STATUS_DIVERGED for t in traces)
