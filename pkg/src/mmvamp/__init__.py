"""Joint sparse recovery for multiple measurement vectors.

Recovers an N x J signal matrix whose rows share a common sparse support from
M x J noisy linear measurements taken through one sparse sensing matrix.
Provides relaxed belief propagation (edge-dependent and edge-independent),
approximate message passing with a residual correction term, the matching
state-evolution predictor, and a reproducible benchmark harness.
"""

from .denoiser import (
    BatchDenoiser,
    DenoiseResult,
    GaussianChannel,
    PriorParams,
    denoise,
    hard_threshold_limit,
    posterior_cov,
    posterior_jacobian,
    posterior_mean,
    posterior_weight,
    scalar_shrinkage,
    weight_gradient,
)
from .model import (
    MeasurementSet,
    ModelConfig,
    SensingMatrix,
    SignalEnsemble,
    gen_instance,
    gen_sensing_matrix,
    gen_signal,
    measure,
    sigma2_from_snr,
)
from .results import IterationRecord, SolveResult
from .rbp import RbpConfig, rbp_solve
from .amp import AmpConfig, amp_solve
from .se import (
    mean_weight_check,
    se_fixed_point,
    se_predict_trace,
    se_step_matrix,
    se_step_scalar,
)
from .harness import ExperimentConfig, nse_db, run_experiment, run_trial, support_metrics

__version__ = "0.1.0"

__all__ = [
    "AmpConfig",
    "BatchDenoiser",
    "DenoiseResult",
    "ExperimentConfig",
    "GaussianChannel",
    "IterationRecord",
    "MeasurementSet",
    "ModelConfig",
    "PriorParams",
    "RbpConfig",
    "SensingMatrix",
    "SignalEnsemble",
    "SolveResult",
    "amp_solve",
    "denoise",
    "gen_instance",
    "gen_sensing_matrix",
    "gen_signal",
    "hard_threshold_limit",
    "mean_weight_check",
    "measure",
    "nse_db",
    "posterior_cov",
    "posterior_jacobian",
    "posterior_mean",
    "posterior_weight",
    "rbp_solve",
    "run_experiment",
    "run_trial",
    "scalar_shrinkage",
    "se_fixed_point",
    "se_predict_trace",
    "se_step_matrix",
    "se_step_scalar",
    "sigma2_from_snr",
    "support_metrics",
    "weight_gradient",
]
