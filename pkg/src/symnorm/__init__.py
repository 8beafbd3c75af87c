"""Recover symmetry distributions and natural poses from class-pose data.

Given per-sample embeddings and poses relative to an arbitrarily oriented
canonical reconstruction, the package centers each class's pose
distribution at its Fréchet mean, fits a parametric symmetry family
(uniform arc, wrapped Gaussian or matrix-Fisher) and scores unusual poses.
"""
from .errors import (
    ConfigError, ConvergenceError, DataError, DegenerateMeanError, DimensionError, DispersionError,
    EmptyDatasetError, NumericalError, SaturationError, SymnormError,
)
from .groups import SO2, SO3, PointSet, Rotation2, Rotation3, apply_action
from .frechet import FrechetConfig, frechet_mean
from .distributions import (
    MatrixFisher3, UniformArc2, WrappedGaussian2, a_ratio, fit, invert_a, log_density, sample,
)
from .latent_index import IndexConfig, build_index, query
from .oracle import ClassSpec, Dataset, generate_dataset, load_dataset, save_dataset
from .normalize import (
    PseudoLabelTable, build_pseudo_labels, canonicalize, normalize_class, predict_gamma, predict_theta,
)
from .metrics import auc_roc, wasserstein1_so2, wasserstein2_so3
from .ood import evaluate_ood, haar_repose, score

__version__ = "0.1.0"

__all__ = [
    "SO2", "SO3", "Rotation2", "Rotation3", "PointSet", "apply_action",
    "FrechetConfig", "frechet_mean",
    "UniformArc2", "WrappedGaussian2", "MatrixFisher3", "sample", "log_density", "fit",
    "a_ratio", "invert_a",
    "IndexConfig", "build_index", "query",
    "ClassSpec", "Dataset", "generate_dataset", "load_dataset", "save_dataset",
    "PseudoLabelTable", "build_pseudo_labels", "normalize_class", "predict_theta", "predict_gamma",
    "canonicalize",
    "auc_roc", "wasserstein1_so2", "wasserstein2_so3",
    "evaluate_ood", "haar_repose", "score",
    "SymnormError", "ConfigError", "DataError", "DimensionError", "EmptyDatasetError",
    "NumericalError", "DegenerateMeanError", "DispersionError", "SaturationError", "ConvergenceError",
]
