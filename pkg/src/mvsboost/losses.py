"""Per-row loss derivatives and the optimal constant starting score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MVSBoostError

LOGLOSS = "logloss"
SQUARED_ERROR = "squared_error"
LOSS_KINDS = (LOGLOSS, SQUARED_ERROR)

# clamp for the base-rate used by the logloss starting score, so single-class
# targets still give a finite log-odds
_BASE_RATE_CLAMP = 1e-9


@dataclass
class GradHess:
    """First and second derivatives of the loss at the current predictions."""

    g: np.ndarray
    h: np.ndarray


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_kind(loss_kind: str) -> None:
    if loss_kind not in LOSS_KINDS:
        raise MVSBoostError(
            f"unknown loss {loss_kind!r}; expected one of {LOSS_KINDS}"
        )


def derivatives(loss_kind: str, targets: np.ndarray,
                predictions: np.ndarray) -> GradHess:
    """Row-wise gradient and hessian of the loss in the raw-score domain.

    For logloss on labels in {0, 1} the gradient is ``sigmoid(pred) - y`` and
    the hessian ``sigmoid(pred) * (1 - sigmoid(pred))``, which lies in
    (0, 0.25].  For squared error, ``L = (pred - y)^2 / 2`` gives gradient
    ``pred - y`` and constant unit hessian.
    """
    _check_kind(loss_kind)
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if targets.shape != predictions.shape:
        raise MVSBoostError(
            f"targets shape {targets.shape} != predictions shape "
            f"{predictions.shape}"
        )
    if loss_kind == LOGLOSS:
        prob = sigmoid(predictions)
        return GradHess(g=prob - targets, h=prob * (1.0 - prob))
    return GradHess(g=predictions - targets, h=np.ones_like(predictions))


def initial_guess(loss_kind: str, targets: np.ndarray) -> float:
    """The constant score minimizing the mean loss over the targets.

    Squared error: the mean.  Logloss: the log-odds of the base rate, with
    the rate clamped away from 0 and 1 so single-class data stays finite.
    """
    _check_kind(loss_kind)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size == 0:
        raise MVSBoostError("cannot compute a starting score for empty targets")
    if loss_kind == SQUARED_ERROR:
        return float(targets.mean())
    rate = float(np.clip(targets.mean(), _BASE_RATE_CLAMP, 1.0 - _BASE_RATE_CLAMP))
    return float(np.log(rate / (1.0 - rate)))


def mean_loss(loss_kind: str, targets: np.ndarray,
              predictions: np.ndarray) -> float:
    """Mean pointwise loss; squared error keeps its 1/2 factor."""
    _check_kind(loss_kind)
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if loss_kind == LOGLOSS:
        # -[y log p + (1-y) log(1-p)] written stably in the raw-score domain
        return float(np.mean(np.logaddexp(0.0, predictions)
                             - targets * predictions))
    return float(np.mean(0.5 * (predictions - targets) ** 2))
