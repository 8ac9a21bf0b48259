"""Evaluation metrics for trained ensembles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boosting import Ensemble, predict
from .errors import MetricError
from .losses import LOGLOSS, mean_loss

KNOWN_METRICS = ("auc", "one_minus_auc", "mse", "logloss")


@dataclass
class EvalReport:
    """Requested metric values on one evaluation set."""

    values: dict
    n_test: int


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve by the rank statistic, ties counted 1/2.

    Equivalent to the probability that a random positive outscores a random
    negative, with tied pairs worth one half.  One sort, so O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricError("scores and labels must be 1-d arrays of equal length")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise MetricError("ROC-AUC needs binary labels in {0, 1}")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError(
            "ROC-AUC is undefined when only one class is present "
            f"(n_pos={n_pos}, n_neg={n_neg})"
        )

    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # average rank within each tie group
    _, inverse, counts = np.unique(sorted_scores, return_inverse=True,
                                   return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    mean_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(scores.size, dtype=np.float64)
    ranks[order] = mean_rank[inverse]

    rank_sum_pos = float(ranks[labels == 1.0].sum())
    u_statistic = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u_statistic / (n_pos * n_neg)


def mse(scores: np.ndarray, targets: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    return float(np.mean((scores - targets) ** 2))


def logloss_metric(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of raw scores under the logistic link."""
    labels = np.asarray(labels, dtype=np.float64)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise MetricError("logloss needs binary labels in {0, 1}")
    return mean_loss(LOGLOSS, labels, scores)


def evaluate(ensemble: Ensemble, features: np.ndarray, targets: np.ndarray,
             metrics=KNOWN_METRICS) -> EvalReport:
    """Score ``features`` and compute exactly the requested metrics.

    Rank metrics use the raw scores directly (the logistic link is monotone,
    so AUC is unchanged by it).  Unknown metric names and metrics undefined
    for the given targets raise :class:`MetricError`.
    """
    targets = np.asarray(targets, dtype=np.float64)
    scores = predict(ensemble, features, output="raw")
    values = {}
    for name in metrics:
        if name == "auc":
            values[name] = roc_auc(scores, targets)
        elif name == "one_minus_auc":
            values[name] = 1.0 - roc_auc(scores, targets)
        elif name == "mse":
            values[name] = mse(scores, targets)
        elif name == "logloss":
            values[name] = logloss_metric(scores, targets)
        else:
            raise MetricError(
                f"unknown metric {name!r}; expected a subset of {KNOWN_METRICS}"
            )
    return EvalReport(values=values, n_test=targets.size)
