"""Tensor-train low-rank adapters for frozen linear layers."""

from .errors import ContractViolation, NumericalFailure
from .tt_core import (
    TTCores,
    TTRanks,
    TTShape,
    TensorizationMap,
    factorize_dims,
    param_count,
    tt_random_init,
    tt_reconstruct,
    tt_svd,
)
from .tt_linear import (
    AdaptedLinear,
    FrozenLinear,
    adapted_forward,
    batch_forward,
    merge,
    tt_matvec,
)
from .models import (
    AdaptedLinearRegressor,
    ArchConfig,
    build_model,
    make_synthetic_classification,
    make_teacher_student,
)
from .train import TrainConfig, Trainer, grad_check
from .train import train as train_model
from .report import compression_report, storage_estimate

__all__ = [
    "ContractViolation",
    "NumericalFailure",
    "TTCores",
    "TTRanks",
    "TTShape",
    "TensorizationMap",
    "factorize_dims",
    "param_count",
    "tt_random_init",
    "tt_reconstruct",
    "tt_svd",
    "AdaptedLinear",
    "FrozenLinear",
    "adapted_forward",
    "batch_forward",
    "merge",
    "tt_matvec",
    "AdaptedLinearRegressor",
    "ArchConfig",
    "build_model",
    "make_synthetic_classification",
    "make_teacher_student",
    "TrainConfig",
    "Trainer",
    "grad_check",
    "train_model",
    "compression_report",
    "storage_estimate",
]

__version__ = "0.1.0"
