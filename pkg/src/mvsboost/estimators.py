"""Scikit-learn style wrappers around the boosting engine.

The estimators validate array inputs, quantize features, run the training
loop, and expose the usual ``fit`` / ``predict`` / ``get_params`` surface so
the model composes with pipelines, grid search, and cross-validation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .boosting import BoostParams, predict, train
from .data import RawDataset, quantize
from .errors import MVSBoostError
from .losses import LOGLOSS, SQUARED_ERROR
from .sampling import SamplingConfig
from .tree import TreeParams


class _BaseBoost(BaseEstimator):
    """Shared parameter surface and fitting machinery."""

    _loss_kind = SQUARED_ERROR

    def __init__(self, n_iterations=100, learning_rate=0.1, max_depth=6,
                 min_leaf_count=1, min_gain=1e-12, eps_reg=1e-3,
                 order="second", sampling="mvs", sample_rate=0.8,
                 mvs_lambda=0.1, goss_top_rate=0.2, goss_other_rate=0.1,
                 max_bins=255, random_state=0):
        self.n_iterations = n_iterations
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_leaf_count = min_leaf_count
        self.min_gain = min_gain
        self.eps_reg = eps_reg
        self.order = order
        self.sampling = sampling
        self.sample_rate = sample_rate
        self.mvs_lambda = mvs_lambda
        self.goss_top_rate = goss_top_rate
        self.goss_other_rate = goss_other_rate
        self.max_bins = max_bins
        self.random_state = random_state

    def _boost_params(self) -> BoostParams:
        return BoostParams(
            loss_kind=self._loss_kind,
            n_iterations=self.n_iterations,
            learning_rate=self.learning_rate,
            order=self.order,
            tree=TreeParams(max_depth=self.max_depth,
                            min_leaf_count=self.min_leaf_count,
                            min_gain=self.min_gain,
                            eps_reg=self.eps_reg),
            sampling=SamplingConfig(strategy=self.sampling,
                                    sample_rate=self.sample_rate,
                                    mvs_lambda=self.mvs_lambda,
                                    goss_top_rate=self.goss_top_rate,
                                    goss_other_rate=self.goss_other_rate,
                                    seed=self.random_state),
        )

    def _fit_engine(self, X, y):
        raw = RawDataset(features=X, targets=y,
                         feature_names=[f"f{j}" for j in range(X.shape[1])])
        binned = quantize(raw, max_bins=self.max_bins)
        self.ensemble_ = train(binned, y, self._boost_params(),
                               seed=self.random_state)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        """Raw additive scores before any link function."""
        check_is_fitted(self, "ensemble_")
        X = check_array(X, dtype=np.float64)
        return predict(self.ensemble_, X, output="raw")


class MVSBoostRegressor(_BaseBoost, RegressorMixin):
    """Gradient boosted trees for squared-error regression."""

    _loss_kind = SQUARED_ERROR

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        return self._fit_engine(X, y.astype(np.float64))

    def predict(self, X):
        return self.decision_function(X)


class MVSBoostClassifier(_BaseBoost, ClassifierMixin):
    """Gradient boosted trees for binary classification with logloss."""

    _loss_kind = LOGLOSS

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise MVSBoostError(
                f"binary classification needs exactly 2 classes, "
                f"got {self.classes_.size}"
            )
        encoded = (y == self.classes_[1]).astype(np.float64)
        return self._fit_engine(X, encoded)

    def predict_proba(self, X):
        check_is_fitted(self, "ensemble_")
        X = check_array(X, dtype=np.float64)
        positive = predict(self.ensemble_, X, output="prob")
        return np.column_stack([1.0 - positive, positive])

    def predict(self, X):
        positive = self.predict_proba(X)[:, 1]
        return self.classes_[(positive >= 0.5).astype(np.int64)]
