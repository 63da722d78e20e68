"""Shallow neural networks on sets viewed as empirical probability measures."""

from .api import MeasureNetClassifier, MeasureNetRegressor
from .data import ExperimentConfig, SetBatch, sample_robust_sets, sample_uniform_cube_sets
from .estimators import MomentRegressor, filter_mean, geometric_median, sample_mean
from .model import MeasureNet, forward, forward_batch, init_model, path_norm
from .targets import TargetSpec, eval_target, make_target

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "MeasureNet", "MeasureNetClassifier", "MeasureNetRegressor",
    "MomentRegressor", "SetBatch", "TargetSpec", "eval_target", "filter_mean", "forward",
    "forward_batch", "geometric_median", "init_model", "make_target", "path_norm",
    "sample_mean", "sample_robust_sets", "sample_uniform_cube_sets",
]
