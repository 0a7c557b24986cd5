"""Unsupervised group DIP with transferable encoder weights.

Train a shared convolutional encoder together with one decoder per
degraded measurement, then reconstruct unseen measurements by adapting a
fresh decoder against the frozen encoder.
"""

from .adaptive_solver import (
    RECON_MODES,
    ReconRequest,
    ReconResult,
    compare_modes,
    reconstruct,
)
from .group_trainer import (
    GroupModel,
    SolverConfig,
    TrainingItem,
    TrainingSet,
    TrainResult,
    group_objective,
    train_group,
    train_shared_decoder,
)
from .metrics import (
    FeatureSpectrum,
    GuardedTruth,
    MetricTrace,
    feature_spectrum,
    lf_ratio,
    psnr,
    spectral_probe,
    ssim,
)
from .network import (
    ArchitectureSpec,
    Decoder,
    Encoder,
    LatentBundle,
    decode,
    encode,
    forward_pass,
    init_group,
    init_params,
)
from .operators import (
    CartesianMask,
    ForwardOperator,
    Measurement,
    MriOperator,
    NonlinearBlurOperator,
    SensitivityMaps,
    SuperResOperator,
    apply_adjoint,
    apply_forward,
    make_cartesian_mask,
    make_sensitivity_maps,
    simulate_measurement,
)

__version__ = "0.1.0"

__all__ = [
    "ArchitectureSpec",
    "CartesianMask",
    "Decoder",
    "Encoder",
    "FeatureSpectrum",
    "ForwardOperator",
    "GroupModel",
    "GuardedTruth",
    "LatentBundle",
    "Measurement",
    "MetricTrace",
    "MriOperator",
    "NonlinearBlurOperator",
    "RECON_MODES",
    "ReconRequest",
    "ReconResult",
    "SensitivityMaps",
    "SolverConfig",
    "SuperResOperator",
    "TrainResult",
    "TrainingItem",
    "TrainingSet",
    "apply_adjoint",
    "apply_forward",
    "compare_modes",
    "decode",
    "encode",
    "feature_spectrum",
    "forward_pass",
    "group_objective",
    "init_group",
    "init_params",
    "lf_ratio",
    "make_cartesian_mask",
    "make_sensitivity_maps",
    "psnr",
    "reconstruct",
    "simulate_measurement",
    "spectral_probe",
    "ssim",
    "train_group",
    "train_shared_decoder",
]
