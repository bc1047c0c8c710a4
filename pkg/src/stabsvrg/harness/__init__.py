from .runner import (
    CompareRow,
    all_diverged,
    compare,
    export_trace,
    first_certified,
    format_table,
    load_trace,
    run,
    run_one,
    summarize,
)
from .spec import ExperimentSpec, ObjectiveSpec, SpecError

__all__ = [
    "ExperimentSpec",
    "ObjectiveSpec",
    "SpecError",
    "run",
    "run_one",
    "compare",
    "summarize",
    "first_certified",
    "format_table",
    "export_trace",
    "load_trace",
    "all_diverged",
    "CompareRow",
]
