"""Versioned on-disk format for objective instances.

A file is a numpy ``.npz`` archive holding a ``magic`` entry, a JSON
``header`` (kind, dimensions, generator parameters, seeds) and the arrays
that define the instance.  Loading checks the magic and format version
before touching anything else.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .quadratic import QuadraticEnsemble
from .saddle import BoundedSaddle2D
from .sensing import MatrixSensingInstance

MAGIC = "STABSVRG-OBJ"
FORMAT_VERSION = 1


class ObjectiveFormatError(ValueError):
    pass


def save_objective(obj, path, meta: dict | None = None) -> Path:
    path = Path(path)
    if isinstance(obj, QuadraticEnsemble):
        arrays = {"H": obj.H, "g": obj.g}
    elif isinstance(obj, BoundedSaddle2D):
        arrays = {"E": obj.E, "gamma": np.array(obj.gamma)}
    elif isinstance(obj, MatrixSensingInstance):
        arrays = {"A": obj.A, "U_star": obj.U_star}
    else:
        raise TypeError(f"cannot serialize objective of type {type(obj).__name__}")
    header = {"version": FORMAT_VERSION, **obj.describe(), "L": obj.L, "meta": meta or {}}
    with open(path, "wb") as fh:
        np.savez(fh, magic=np.array(MAGIC), header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_objective(path):
    """Return ``(objective, header)`` from a file written by :func:`save_objective`."""
    path = Path(path)
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ObjectiveFormatError(f"{path}: not an objective file ({exc})") from exc
    with data:
        if "magic" not in data.files or str(data["magic"]) != MAGIC:
            raise ObjectiveFormatError(f"{path}: bad magic header")
        header = json.loads(str(data["header"]))
        if header.get("version") != FORMAT_VERSION:
            raise ObjectiveFormatError(f"{path}: unsupported format version {header.get('version')}")
        kind = header["kind"]
        if kind == "quadratic":
            obj = QuadraticEnsemble(data["H"], data["g"])
        elif kind == "saddle":
            obj = BoundedSaddle2D(float(data["gamma"]), data["E"])
        elif kind == "sensing":
            obj = MatrixSensingInstance(data["A"], data["U_star"])
        else:
            raise ObjectiveFormatError(f"{path}: unknown objective kind {kind!r}")
    if obj.L is None and header.get("L") is not None:
        obj.L = float(header["L"])
    return obj, header
