"""Command-line interface.

Usage::

    stabsvrg run --spec exp.json --seeds 0-99 --budget 1000000 --out-dir traces/
    stabsvrg compare --spec a.json --spec b.json --seeds 0-9
    stabsvrg certify --spec exp.json --trace traces/stabilized_seed0.json
    stabsvrg probe variance --spec exp.json --trials 1000
    stabsvrg constants --spec exp.json --pairs 50

Exit codes: 0 success, 2 invalid spec, 3 every run diverged.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from ..rng import Rng
from ..svrg import SvrgConfig
from ..verify import certify, coupled_bound_ratios, coupled_variance_probe, CoupledPair, estimate_constants, variance_probe
from .runner import all_diverged, compare, format_table, load_trace, run, summarize
from .spec import ExperimentSpec, SpecError

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_DIVERGED = 3


def parse_seeds(text: str) -> list:
    """``"3"``, ``"0,1,5"`` or ``"0-99"`` (inclusive range)."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise SpecError(f"no seeds in {text!r}")
    return seeds


def _load_spec(path, args) -> ExperimentSpec:
    spec = ExperimentSpec.load(path)
    changes = {}
    if getattr(args, "seeds", None):
        changes["seeds"] = parse_seeds(args.seeds)
    if getattr(args, "seed", None) is not None:
        changes["seeds"] = [args.seed]
    if getattr(args, "budget", None) is not None:
        changes["budget"] = args.budget
    if changes:
        spec = dataclasses.replace(spec, **changes)
        spec.validate()
    return spec


def _add_common(p, multi_spec=False):
    if multi_spec:
        p.add_argument("--spec", action="append", required=True, help="experiment spec (JSON); repeatable")
    else:
        p.add_argument("--spec", required=True, help="experiment spec (JSON)")
    p.add_argument("--seed", type=int, help="single run seed (overrides the spec)")
    p.add_argument("--seeds", help="seed list, e.g. 0,1,2 or 0-99")
    p.add_argument("--budget", type=int, help="stochastic-gradient budget")
    p.add_argument("--out-dir", help="directory for per-seed trace files")
    p.add_argument("--format", choices=("structured", "csv"), default="structured")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stabsvrg", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one algorithm over seeds")
    _add_common(p)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("compare", help="comparison table across specs")
    _add_common(p, multi_spec=True)

    p = sub.add_parser("certify", help="certify a point or the final point of a trace")
    _add_common(p)
    p.add_argument("--trace", help="structured trace file; certifies its final point")
    p.add_argument("--point", help="comma-separated coordinates")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--rho", type=float)

    p = sub.add_parser("probe", help="estimator probes")
    _add_common(p)
    p.add_argument("kind", choices=("variance", "coupled"))
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--distance", type=float, default=0.1)

    p = sub.add_parser("constants", help="empirical L, rho, rho'")
    _add_common(p)
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--radius", type=float, default=1.0)
    return parser


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def _cmd_run(args):
    spec = _load_spec(args.spec, args)
    traces = run(spec, args.out_dir, args.format, workers=args.workers)
    obj = spec.objective.build()
    rho = obj.rho if obj.rho else 1.0
    row = summarize(spec.algorithm, traces, obj, spec.epsilon, rho)
    print(format_table([row]))
    return EXIT_DIVERGED if all_diverged(traces) else EXIT_OK


def _cmd_compare(args):
    specs = [_load_spec(p, args) for p in args.spec]
    try:
        rows = compare(specs, args.out_dir)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    print(format_table(rows))
    return EXIT_OK


def _cmd_certify(args):
    spec = _load_spec(args.spec, args)
    obj = spec.objective.build()
    if args.trace:
        trace, _ = load_trace(args.trace)
        x = trace.final_x
    elif args.point:
        x = np.array([float(v) for v in args.point.split(",")])
    else:
        x = spec.make_x0(obj, spec.seeds[0])
    if x.shape != (obj.d,):
        raise SpecError(f"point must have length {obj.d}")
    eps = args.epsilon if args.epsilon is not None else spec.epsilon
    rho = args.rho if args.rho is not None else obj.rho
    if not rho:
        raise SpecError("rho unknown; pass --rho")
    seed = args.seed if args.seed is not None else spec.seeds[0]
    _emit(certify(obj, x, eps, rho, Rng(seed).fork("certify")).to_dict())
    return EXIT_OK


def _cmd_probe(args):
    spec = _load_spec(args.spec, args)
    obj = spec.objective.build()
    seed = spec.seeds[0]
    rng = Rng(seed)
    cfg = spec.make_config(obj)
    x = spec.make_x0(obj, seed)
    direction = rng.fork("direction").normal(obj.d)
    direction /= np.linalg.norm(direction)
    other = x + args.distance * direction
    if args.kind == "variance":
        s = variance_probe(obj, other, x, cfg.b, args.trials, rng.fork("probe"))
        _emit({"percentiles": s.percentiles, "mean_sq_error": s.mean_sq_error,
               "bound_L2_over_b_dist2": s.bound(), "unbiased": s.unbiased(), "L": s.L, "b": s.b})
    else:
        svrg_cfg = SvrgConfig(cfg.m, cfg.b, cfg.eta)
        pair = CoupledPair.along(x, other, direction, args.distance)
        recs = coupled_variance_probe(obj, pair, args.steps, svrg_cfg, rng.fork("probe"))
        ratios = coupled_bound_ratios(recs, cfg.b, obj.L, obj.rho_prime or 0.0)
        _emit({"steps": len(recs), "fitted_c_p99": float(np.percentile(ratios, 99)) if ratios.size else None,
               "xi_diff_norms": [r.xi_diff_norm for r in recs]})
    return EXIT_OK


def _cmd_constants(args):
    spec = _load_spec(args.spec, args)
    obj = spec.objective.build()
    rng = Rng(spec.seeds[0]).fork("constants")
    if hasattr(obj, "sample_point"):
        def sampler(g):
            return obj.sample_point(g, args.radius)
    else:
        def sampler(g):
            return g.normal(obj.d) * args.radius
    _emit(estimate_constants(obj, sampler, args.pairs, rng).to_dict())
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "certify": _cmd_certify,
    "probe": _cmd_probe,
    "constants": _cmd_constants,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
