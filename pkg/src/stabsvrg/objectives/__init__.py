from .base import FiniteSumObjective, ShiftedObjective, zero_sum_symmetric_noise
from .io import ObjectiveFormatError, load_objective, save_objective
from .quadratic import QuadraticEnsemble, quadratic_ensemble_make
from .saddle import BoundedSaddle2D, bounded_saddle_make
from .sensing import (
    MatrixSensingInstance,
    hessian_gap_witness,
    matrix_sensing_component_gradient,
    matrix_sensing_hessian_form,
    matrix_sensing_make,
    matrix_sensing_value,
    rip_probe,
)

__all__ = [
    "FiniteSumObjective",
    "ShiftedObjective",
    "zero_sum_symmetric_noise",
    "QuadraticEnsemble",
    "quadratic_ensemble_make",
    "BoundedSaddle2D",
    "bounded_saddle_make",
    "MatrixSensingInstance",
    "matrix_sensing_make",
    "matrix_sensing_value",
    "matrix_sensing_component_gradient",
    "matrix_sensing_hessian_form",
    "rip_probe",
    "hessian_gap_witness",
    "save_objective",
    "load_objective",
    "ObjectiveFormatError",
]
