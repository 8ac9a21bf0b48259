"""Histogram-based regression trees on pre-binned features.

Trees are grown level by level (all nodes of one depth at a time) so the
result is a pure function of the selected rows and their derivative sums,
independent of traversal order.  Split quality and leaf values only consume
weighted derivative aggregates, which is what makes importance-weighted row
subsets drop-in replacements for the full data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BinnedDataset
from .errors import MVSBoostError
from .losses import GradHess
from .sampling import SampleSelection


@dataclass
class TreeParams:
    """Growth limits and the leaf-denominator guard."""

    max_depth: int = 6
    min_leaf_count: int = 1
    min_gain: float = 1e-12
    eps_reg: float = 1e-3

    def validate(self) -> None:
        if self.max_depth < 0:
            raise MVSBoostError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_leaf_count < 1:
            raise MVSBoostError(
                f"min_leaf_count must be >= 1, got {self.min_leaf_count}"
            )
        if self.min_gain <= 0.0:
            raise MVSBoostError(f"min_gain must be > 0, got {self.min_gain}")
        if self.eps_reg < 0.0:
            raise MVSBoostError(f"eps_reg must be >= 0, got {self.eps_reg}")


@dataclass
class LeafStats:
    """Weighted derivative sums and the raw row count of one node."""

    sum_wg: float
    sum_wh: float
    count: int


@dataclass
class SplitCandidate:
    """A proposed split: route rows with ``bin <= bin`` left."""

    feature: int
    bin: int
    gain: float


@dataclass
class TreeNode:
    """One node; leaves carry a value, internal nodes a (feature, bin) test."""

    feature: int = -1
    bin: int = -1
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def leaf_score(sum_wg, sum_wh, eps_reg: float):
    """Score contribution of one leaf: ``sum_wg^2 / (sum_wh + eps_reg)``.

    Written with array-compatible operations; this single definition is used
    by exact split search, by the boosting loop, and by the variance lab's
    Monte-Carlo estimates, so every consumer scores leaves identically.
    """
    return sum_wg * sum_wg / (sum_wh + eps_reg)


def split_score(left: LeafStats, right: LeafStats, eps_reg: float) -> float:
    """Combined score of a two-leaf split."""
    return float(leaf_score(left.sum_wg, left.sum_wh, eps_reg)
                 + leaf_score(right.sum_wg, right.sum_wh, eps_reg))


def _best_split_products(abs_rows: np.ndarray, binned: BinnedDataset,
                         wg: np.ndarray, wh: np.ndarray,
                         params: TreeParams) -> SplitCandidate | None:
    """Exhaustive histogram split search over all features and boundaries.

    Gains are measured against the unsplit node.  Ties resolve to the lowest
    feature index, then the lowest bin, so rebuilding a tree from identical
    inputs yields an identical structure.
    """
    n_node = abs_rows.size
    if n_node < 2 * params.min_leaf_count:
        return None
    total_wg = float(wg.sum())
    total_wh = float(wh.sum())
    parent = leaf_score(total_wg, total_wh, params.eps_reg)

    best: SplitCandidate | None = None
    best_gain = -np.inf
    for feature in range(binned.n_features):
        n_bins = int(binned.n_bins[feature])
        if n_bins < 2:
            continue
        node_bins = binned.bins[feature][abs_rows]
        hist_wg = np.bincount(node_bins, weights=wg, minlength=n_bins)
        hist_wh = np.bincount(node_bins, weights=wh, minlength=n_bins)
        hist_n = np.bincount(node_bins, minlength=n_bins)
        left_wg = np.cumsum(hist_wg)[:-1]
        left_wh = np.cumsum(hist_wh)[:-1]
        left_n = np.cumsum(hist_n)[:-1]

        admissible = ((left_n >= params.min_leaf_count)
                      & (n_node - left_n >= params.min_leaf_count))
        if not admissible.any():
            continue
        gains = (leaf_score(left_wg, left_wh, params.eps_reg)
                 + leaf_score(total_wg - left_wg, total_wh - left_wh,
                              params.eps_reg)
                 - parent)
        gains = np.where(admissible, gains, -np.inf)
        b = int(np.argmax(gains))
        if gains[b] >= params.min_gain and gains[b] > best_gain:
            best_gain = float(gains[b])
            best = SplitCandidate(feature=feature, bin=b, gain=best_gain)
    return best


def best_split(rows: np.ndarray, binned: BinnedDataset, gh: GradHess,
               weights: np.ndarray, params: TreeParams) -> SplitCandidate | None:
    """Best admissible split for the given rows, or None if no gain clears
    ``min_gain`` with both children holding ``min_leaf_count`` rows."""
    rows = np.asarray(rows, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    wg = weights * np.asarray(gh.g, dtype=np.float64)[rows]
    wh = weights * np.asarray(gh.h, dtype=np.float64)[rows]
    return _best_split_products(rows, binned, wg, wh, params)


def _seal_leaf(node: TreeNode, sum_wg: float, sum_wh: float,
               eps_reg: float) -> None:
    node.value = float(-sum_wg / (sum_wh + eps_reg))


def build_tree(selection: SampleSelection, binned: BinnedDataset,
               gh: GradHess, params: TreeParams) -> TreeNode:
    """Grow one tree on the selected, importance-weighted rows.

    Leaf values are ``-sum(w g) / (sum(w h) + eps_reg)``, the weighted Newton
    step for the rows reaching the leaf.  An empty selection yields a single
    zero leaf.  Growth is level-order and stops at ``max_depth`` or when no
    node has an admissible split.
    """
    params.validate()
    root = TreeNode()
    idx = np.asarray(selection.indices, dtype=np.int64)
    if idx.size == 0:
        _seal_leaf(root, 0.0, 0.0, max(params.eps_reg, 1e-300))
        return root
    weights = np.asarray(selection.weights, dtype=np.float64)
    wg = weights * np.asarray(gh.g, dtype=np.float64)[idx]
    wh = weights * np.asarray(gh.h, dtype=np.float64)[idx]

    frontier = [(root, np.arange(idx.size))]
    for _ in range(params.max_depth):
        next_frontier = []
        for node, pos in frontier:
            candidate = _best_split_products(idx[pos], binned, wg[pos],
                                             wh[pos], params)
            if candidate is None:
                _seal_leaf(node, float(wg[pos].sum()), float(wh[pos].sum()),
                           params.eps_reg)
                continue
            node.feature = candidate.feature
            node.bin = candidate.bin
            node.left = TreeNode()
            node.right = TreeNode()
            go_left = binned.bins[candidate.feature][idx[pos]] <= candidate.bin
            next_frontier.append((node.left, pos[go_left]))
            next_frontier.append((node.right, pos[~go_left]))
        frontier = next_frontier
        if not frontier:
            break
    for node, pos in frontier:
        _seal_leaf(node, float(wg[pos].sum()), float(wh[pos].sum()),
                   params.eps_reg)
    return root


def predict_tree(tree: TreeNode, row_bins) -> float:
    """Route one binned row to its leaf value."""
    node = tree
    while not node.is_leaf:
        node = node.left if row_bins[node.feature] <= node.bin else node.right
    return node.value


def predict_binned(tree: TreeNode, bins: list, n_rows: int,
                   out: np.ndarray | None = None) -> np.ndarray:
    """Leaf values for every row of a column-major binned matrix."""
    scores = np.zeros(n_rows, dtype=np.float64) if out is None else out
    stack = [(tree, np.arange(n_rows))]
    while stack:
        node, pos = stack.pop()
        if node.is_leaf:
            scores[pos] = node.value
            continue
        go_left = bins[node.feature][pos] <= node.bin
        stack.append((node.left, pos[go_left]))
        stack.append((node.right, pos[~go_left]))
    return scores


def tree_depth(tree: TreeNode) -> int:
    """Longest root-to-leaf path length."""
    if tree.is_leaf:
        return 0
    return 1 + max(tree_depth(tree.left), tree_depth(tree.right))


def count_leaves(tree: TreeNode) -> int:
    if tree.is_leaf:
        return 1
    return count_leaves(tree.left) + count_leaves(tree.right)
