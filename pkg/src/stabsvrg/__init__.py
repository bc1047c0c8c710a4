"""SVRG with perturbation and stabilization for escaping saddle points."""
from .escape import (
    EscapeConfig,
    EscapeConstants,
    SuperEpochOutcome,
    default_parameters,
    perturbed_svrg,
    stabilized_svrg,
    super_epoch_outcome,
)
from .rng import Rng, random_stop_draw, sample_ball, sample_minibatch
from .svrg import EpochContext, GradCounter, SvrgConfig, gradient_estimate, svrg_epoch, svrg_epoch_random_stop, svrg_run
from .trace import RunTrace, SuperEpochRecord, TraceRow
from .verify import (
    StationarityReport,
    certify,
    estimate_constants,
    fd_gradient,
    hvp,
    lambda_min,
    variance_probe,
)

__version__ = "0.1.0"
