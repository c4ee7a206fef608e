"""
Learning position-dependent disturbances of a magnetically levitated planar
stage with Gaussian processes, and feeding them forward.

Modules:

- ``kernels``: composite periodic / RBF / linear covariance and its gradients
- ``gp``: exact inference, marginal likelihood and the hyperparameter optimiser
- ``sparse``: subset-of-regressors compression
- ``motor_sim``: 6-DOF rigid-body plant, disturbance field and PID loops
- ``trajectory``: snap-limited point-to-point references
- ``campaign``: grid campaigns, validation and tracking comparisons
- ``io``: CSV / JSON / INI formats used by the command line
"""

from .campaign import (
    CampaignConfig,
    EvaluationReport,
    MeasurementSet,
    TrackingConfig,
    assemble_dataset,
    initial_hyperparameters,
    run_grid_campaign,
    run_tracking_comparison,
    train_model,
    validate_model,
)
from .gp import (
    Dataset,
    FactorizationError,
    GPPosterior,
    OptimizerConfig,
    fit_posterior,
    nll,
    nll_gradient,
    optimize_hyperparameters,
    predict_mean,
    predict_variance,
)
from .kernels import INPUT_DIM, INPUT_NAMES, HyperParameters, KernelSpec, eval_kernel, kernel_matrix
from .metrics import bfr, error_norms, spatial_spectrum
from .sparse import SRPredictor, sr_compress
from .trajectory import MotionConstraints, plan_fourth_order, sample_trajectory

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig",
    "Dataset",
    "EvaluationReport",
    "FactorizationError",
    "GPPosterior",
    "HyperParameters",
    "INPUT_DIM",
    "INPUT_NAMES",
    "KernelSpec",
    "MeasurementSet",
    "MotionConstraints",
    "OptimizerConfig",
    "SRPredictor",
    "TrackingConfig",
    "assemble_dataset",
    "bfr",
    "error_norms",
    "eval_kernel",
    "fit_posterior",
    "initial_hyperparameters",
    "kernel_matrix",
    "nll",
    "nll_gradient",
    "optimize_hyperparameters",
    "plan_fourth_order",
    "predict_mean",
    "predict_variance",
    "run_grid_campaign",
    "run_tracking_comparison",
    "sample_trajectory",
    "spatial_spectrum",
    "sr_compress",
    "train_model",
    "validate_model",
]
