"""Gradient boosted decision trees with pluggable per-iteration row sampling.

The estimators in :mod:`mvsboost.estimators` are the friendly entry point;
the functional modules underneath (data, losses, sampling, tree, boosting,
metrics, lab) expose every building block for direct use and testing.
"""

from .boosting import (BoostParams, Ensemble, load_model, predict,
                       save_model, train)
from .data import BinnedDataset, RawDataset, load_csv, quantize
from .errors import (DataError, MetricError, ModelFormatError, MVSBoostError,
                     UnsupportedModelVersion)
from .estimators import MVSBoostClassifier, MVSBoostRegressor
from .losses import GradHess, derivatives, initial_guess
from .metrics import EvalReport, evaluate, roc_auc
from .sampling import (SampleSelection, SamplingConfig, adaptive_lambda,
                       goss_select, mvs_select, regularized_abs, select_rows,
                       sgb_select, threshold_by_partition, threshold_by_sort)
from .tree import TreeNode, TreeParams, best_split, build_tree, predict_tree

__version__ = "0.1.0"

__all__ = [
    "BinnedDataset", "BoostParams", "DataError", "Ensemble", "EvalReport",
    "GradHess", "MVSBoostClassifier", "MVSBoostError", "MVSBoostRegressor",
    "MetricError", "ModelFormatError", "RawDataset", "SampleSelection",
    "SamplingConfig", "TreeNode", "TreeParams", "UnsupportedModelVersion",
    "adaptive_lambda", "best_split", "build_tree", "derivatives", "evaluate",
    "goss_select", "initial_guess", "load_csv", "load_model", "mvs_select",
    "predict", "predict_tree", "quantize", "regularized_abs", "roc_auc",
    "save_model", "select_rows", "sgb_select", "threshold_by_partition",
    "threshold_by_sort", "train",
]
