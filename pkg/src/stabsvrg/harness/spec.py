"""Experiment specifications: parsing, validation, hashing and objective construction."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..escape import VARIANTS, EscapeConfig, EscapeConstants, default_parameters
from ..objectives import bounded_saddle_make, load_objective, matrix_sensing_make, quadratic_ensemble_make
from ..rng import Rng
from ..svrg import SvrgConfig
from ..verify import estimate_lipschitz

ALGORITHMS = ("svrg",) + VARIANTS
OBJECTIVE_KINDS = ("quadratic", "saddle", "sensing", "file")


class SpecError(ValueError):
    """Invalid experiment specification."""


@dataclass
class ObjectiveSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def validate(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise SpecError(f"objective kind must be one of {OBJECTIVE_KINDS}, got {self.kind!r}")
        required = {
            "quadratic": ("d", "n", "gamma"),
            "saddle": ("gamma", "n"),
            "sensing": ("d", "r", "n"),
            "file": ("path",),
        }[self.kind]
        missing = [k for k in required if k not in self.params]
        if missing:
            raise SpecError(f"objective {self.kind!r} is missing parameters {missing}")

    def build(self):
        self.validate()
        p = self.params
        rng = Rng(self.seed)
        if self.kind == "quadratic":
            return quadratic_ensemble_make(
                int(p["d"]), int(p["n"]), float(p["gamma"]), float(p.get("spread", 0.0)), rng,
                top=float(p.get("top", 1.0)), L_cap=p.get("L_cap"),
            )
        if self.kind == "saddle":
            return bounded_saddle_make(float(p["gamma"]), int(p["n"]), float(p.get("spread", 0.0)), rng)
        if self.kind == "sensing":
            obj = matrix_sensing_make(int(p["d"]), int(p["r"]), int(p["n"]), rng)
            if p.get("L") is not None:
                obj.L = float(p["L"])
            else:
                radius = float(p.get("L_radius", 2.0))
                obj.L = estimate_lipschitz(obj, lambda g: obj.sample_point(g, radius), int(p.get("L_pairs", 200)), rng.fork("L"))
            return obj
        obj, _ = load_objective(p["path"])
        return obj


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce a batch of seeded runs."""

    objective: ObjectiveSpec
    algorithm: str
    seeds: list = field(default_factory=lambda: [0])
    budget: Optional[int] = None
    epsilon: float = 1e-2
    config: Optional[dict] = None  # explicit SvrgConfig/EscapeConfig fields; derived when None
    constants: Optional[dict] = None  # EscapeConstants overrides for derived configs
    x0: object = None  # None (zeros), a list, or {"random": scale}
    verbosity: str = "steps"
    f_star: Optional[float] = None

    # construction --------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        try:
            d = dict(d)
            obj = d.pop("objective")
            if not isinstance(obj, dict):
                raise SpecError("objective must be a mapping")
            spec = cls(objective=ObjectiveSpec(**obj), **d)
        except TypeError as exc:
            raise SpecError(str(exc)) from exc
        except KeyError as exc:
            raise SpecError(f"missing field {exc}") from exc
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise SpecError(f"cannot read spec {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def spec_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    # validation -----------------------------------------------------
    def validate(self):
        self.objective.validate()
        if self.algorithm not in ALGORITHMS:
            raise SpecError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not isinstance(self.seeds, list) or not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise SpecError("seeds must be a non-empty list of integers")
        if self.budget is not None and (not isinstance(self.budget, int) or self.budget < 0):
            raise SpecError("budget must be a nonnegative integer")
        if self.algorithm in VARIANTS and self.budget is None:
            raise SpecError(f"algorithm {self.algorithm!r} needs a budget")
        if not (isinstance(self.epsilon, (int, float)) and self.epsilon > 0):
            raise SpecError("epsilon must be positive")
        if self.verbosity not in ("steps", "snapshots"):
            raise SpecError("verbosity must be 'steps' or 'snapshots'")
        if self.algorithm == "svrg" and self.config is None:
            raise SpecError("algorithm 'svrg' needs an explicit config (m, b, eta)")
        if self.constants is not None:
            try:
                EscapeConstants(**self.constants)
            except TypeError as exc:
                raise SpecError(f"bad constants: {exc}") from exc
        if self.config is not None:
            try:
                self._explicit_config(n=1)
            except (TypeError, ValueError) as exc:
                raise SpecError(f"bad config: {exc}") from exc
        if self.x0 is not None and not isinstance(self.x0, (list, dict)):
            raise SpecError("x0 must be null, a list or {'random': scale}")

    def _explicit_config(self, n: int):
        cfg = dict(self.config)
        if self.algorithm == "svrg":
            budget = self.budget
            if "S" not in cfg:
                if budget is None:
                    raise ValueError("svrg needs S or a budget")
                cfg["S"] = budget // max(1, n) + 1
            return SvrgConfig(**cfg)
        cfg.setdefault("budget", self.budget)
        return EscapeConfig(**cfg)

    # derived objects --------------------------------------------------
    def make_config(self, obj):
        if self.config is not None:
            return self._explicit_config(obj.n)
        if obj.L is None or obj.rho is None or obj.rho_prime is None:
            raise SpecError("objective lacks declared constants; give an explicit config")
        rho = obj.rho
        rho_prime = max(obj.rho_prime, rho)
        if rho <= 0:
            raise SpecError("objective has rho = 0; give an explicit config")
        consts = EscapeConstants(**(self.constants or {}))
        return default_parameters(obj.n, obj.L, rho, rho_prime, self.epsilon, self.algorithm, consts, self.budget)

    def make_x0(self, obj, seed: int) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(obj.d)
        if isinstance(self.x0, dict):
            scale = float(self.x0.get("random", 1.0))
            g = Rng(seed).fork("x0")
            if hasattr(obj, "sample_point"):
                return obj.sample_point(g, scale)
            return g.normal(obj.d) * scale
        x0 = np.array(self.x0, dtype=float)
        if x0.shape != (obj.d,):
            raise SpecError(f"x0 must have length {obj.d}")
        return x0

    def resolved_f_star(self, obj) -> Optional[float]:
        return self.f_star if self.f_star is not None else obj.f_star()
