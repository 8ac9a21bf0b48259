"""The boosting loop, ensemble prediction, and the model file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import BinnedDataset, bin_matrix
from .errors import MVSBoostError, ModelFormatError, UnsupportedModelVersion
from .losses import (LOGLOSS, LOSS_KINDS, GradHess, derivatives,
                     initial_guess, mean_loss, sigmoid)
from .sampling import SamplingConfig, select_rows
from .tree import TreeNode, TreeParams, build_tree, predict_binned

MODEL_FORMAT_VERSION = 1


@dataclass
class BoostParams:
    """Everything the training loop needs besides the data and the seed."""

    loss_kind: str = LOGLOSS
    n_iterations: int = 100
    learning_rate: float = 0.1
    order: str = "second"
    tree: TreeParams = field(default_factory=TreeParams)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    def validate(self) -> None:
        if self.loss_kind not in LOSS_KINDS:
            raise MVSBoostError(
                f"unknown loss {self.loss_kind!r}; expected one of {LOSS_KINDS}"
            )
        if self.n_iterations < 1:
            raise MVSBoostError(
                f"n_iterations must be >= 1, got {self.n_iterations}"
            )
        if not 0.0 < self.learning_rate <= 1.0:
            raise MVSBoostError(
                f"learning_rate must lie in (0, 1], got {self.learning_rate}"
            )
        if self.order not in ("first", "second"):
            raise MVSBoostError(
                f"order must be 'first' or 'second', got {self.order!r}"
            )
        self.tree.validate()
        self.sampling.validate()


@dataclass
class Ensemble:
    """A trained additive model.

    Raw prediction is ``initial + learning_rate * sum(tree outputs)``; leaf
    values are stored unscaled so the shrinkage factor lives in one place.
    """

    initial: float
    trees: list
    learning_rate: float
    loss_kind: str
    bin_edges: list

    @property
    def n_features(self) -> int:
        return len(self.bin_edges)


@dataclass
class TrainEvent:
    """One step of the training loop, reported to an observer callback."""

    iteration: int
    stage: str
    info: dict


def train(binned: BinnedDataset, targets: np.ndarray, params: BoostParams,
          seed: int = 0,
          observer: Callable[[TrainEvent], None] | None = None) -> Ensemble:
    """Train an ensemble with per-iteration row sampling.

    Each iteration: score the full dataset, compute per-row derivatives on
    all rows, let the sampling strategy pick a weighted row subset, fit one
    histogram tree to that subset, and append it.  Every random decision of
    iteration ``m`` comes from ``default_rng([seed, m])``, so a (seed, config,
    data) triple fully determines the model.

    ``observer`` receives a :class:`TrainEvent` per pipeline stage plus an
    ``iteration_end`` summary (sampled count, threshold, regularization
    weight, training loss); pass None to skip instrumentation.
    """
    params.validate()
    targets = np.asarray(targets, dtype=np.float64)
    n = binned.n_rows
    if targets.shape != (n,):
        raise MVSBoostError(
            f"targets shape {targets.shape} does not match {n} binned rows"
        )
    if params.loss_kind == LOGLOSS and not np.isin(targets, (0.0, 1.0)).all():
        raise MVSBoostError("logloss requires targets in {0, 1}")

    initial = initial_guess(params.loss_kind, targets)
    predictions = np.full(n, initial, dtype=np.float64)
    trees: list[TreeNode] = []
    alpha = params.learning_rate

    for m in range(params.n_iterations):
        def emit(stage: str, info: dict, _m=m) -> None:
            if observer is not None:
                observer(TrainEvent(iteration=_m, stage=stage, info=info))

        emit("predictions", {})
        gh = derivatives(params.loss_kind, targets, predictions)
        if not (np.isfinite(gh.g).all() and np.isfinite(gh.h).all()):
            raise MVSBoostError(f"non-finite derivatives at iteration {m}")
        emit("derivatives", {})
        if params.order == "first":
            gh = GradHess(g=gh.g, h=np.ones_like(gh.h))

        rng = np.random.default_rng([seed, m])
        selection = select_rows(gh, params.sampling, rng,
                                emit=emit if observer is not None else None)
        tree = build_tree(selection, binned, gh, params.tree)
        emit("train_tree", {})
        trees.append(tree)
        emit("append", {})

        predictions += alpha * predict_binned(tree, binned.bins, n)
        if observer is not None:
            emit("iteration_end", {
                "n_sampled": selection.n_selected,
                "sampled_fraction": selection.n_selected / n,
                "mu": selection.mu,
                "lam": selection.lam,
                "train_loss": mean_loss(params.loss_kind, targets, predictions),
            })

    return Ensemble(initial=initial, trees=trees, learning_rate=alpha,
                    loss_kind=params.loss_kind, bin_edges=binned.bin_edges)


def predict_from_bins(ensemble: Ensemble, bins: list, n_rows: int) -> np.ndarray:
    scores = np.full(n_rows, ensemble.initial, dtype=np.float64)
    tree_out = np.zeros(n_rows, dtype=np.float64)
    for tree in ensemble.trees:
        predict_binned(tree, bins, n_rows, out=tree_out)
        scores += ensemble.learning_rate * tree_out
    return scores


def predict(ensemble: Ensemble, features: np.ndarray,
            output: str = "raw") -> np.ndarray:
    """Score raw feature rows; ``output="prob"`` applies the logistic link.

    Probability output is only meaningful for logloss models and is refused
    otherwise.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise MVSBoostError(
            f"expected a 2-d feature matrix, got ndim={features.ndim}"
        )
    if features.shape[1] != ensemble.n_features:
        raise MVSBoostError(
            f"feature count mismatch: model expects {ensemble.n_features} "
            f"features, got {features.shape[1]}"
        )
    bins = bin_matrix(features, ensemble.bin_edges)
    scores = predict_from_bins(ensemble, bins, features.shape[0])
    if output == "raw":
        return scores
    if output == "prob":
        if ensemble.loss_kind != LOGLOSS:
            raise MVSBoostError(
                "probability output requires a logloss model, this one was "
                f"trained with {ensemble.loss_kind!r}"
            )
        return sigmoid(scores)
    raise MVSBoostError(f"unknown output kind {output!r}; use 'raw' or 'prob'")


def _tree_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": float(node.value)}
    return {
        "feature": int(node.feature),
        "bin": int(node.bin),
        "left": _tree_to_dict(node.left),
        "right": _tree_to_dict(node.right),
    }


def _tree_from_dict(doc) -> TreeNode:
    if not isinstance(doc, dict):
        raise ModelFormatError(f"tree node must be an object, got {type(doc).__name__}")
    if "value" in doc:
        if set(doc) != {"value"}:
            raise ModelFormatError(f"leaf node carries unexpected fields: {sorted(doc)}")
        return TreeNode(value=float(doc["value"]))
    missing = {"feature", "bin", "left", "right"} - set(doc)
    if missing:
        raise ModelFormatError(f"split node missing fields: {sorted(missing)}")
    return TreeNode(feature=int(doc["feature"]), bin=int(doc["bin"]),
                    left=_tree_from_dict(doc["left"]),
                    right=_tree_from_dict(doc["right"]))


def model_to_text(ensemble: Ensemble) -> str:
    """Serialize to the versioned JSON document described in the README."""
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "loss": ensemble.loss_kind,
        "alpha": float(ensemble.learning_rate),
        "initial": float(ensemble.initial),
        "bin_edges": [[float(e) for e in edges] for edges in ensemble.bin_edges],
        "trees": [_tree_to_dict(t) for t in ensemble.trees],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def model_from_text(text: str) -> Ensemble:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"malformed model document at offset {exc.pos}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise UnsupportedModelVersion(
            f"unsupported model format version {version!r}; this reader "
            f"supports version {MODEL_FORMAT_VERSION}"
        )
    missing = {"loss", "alpha", "initial", "bin_edges", "trees"} - set(doc)
    if missing:
        raise ModelFormatError(f"model document missing fields: {sorted(missing)}")
    if doc["loss"] not in LOSS_KINDS:
        raise ModelFormatError(f"unknown loss {doc['loss']!r} in model document")
    return Ensemble(
        initial=float(doc["initial"]),
        trees=[_tree_from_dict(t) for t in doc["trees"]],
        learning_rate=float(doc["alpha"]),
        loss_kind=doc["loss"],
        bin_edges=[np.asarray(edges, dtype=np.float64)
                   for edges in doc["bin_edges"]],
    )


def save_model(ensemble: Ensemble, path) -> None:
    text = model_to_text(ensemble)
    with open(path, "w") as fh:
        fh.write(text)


def load_model(path) -> Ensemble:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    return model_from_text(text)
