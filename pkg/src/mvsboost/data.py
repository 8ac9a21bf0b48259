"""CSV ingestion and quantile binning into histogram-ready columns."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class RawDataset:
    """Dense numeric dataset with the target column already split off.

    Attributes
    ----------
    features : ndarray of shape (n_rows, n_features), float64
    targets : ndarray of shape (n_rows,), float64
    feature_names : list of str
    """

    features: np.ndarray
    targets: np.ndarray
    feature_names: list

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass
class BinnedDataset:
    """Column-major binned feature matrix.

    ``bins[f][i]`` is the bin index of row ``i`` for feature ``f``.  A raw
    value ``v`` maps to the smallest bin ``b`` with ``v <= bin_edges[f][b]``
    and to the last bin when it exceeds every edge, so edges are upper
    boundaries and the mapping is total.  A feature with a single bin has no
    edges and can never be split on.
    """

    bins: list
    bin_edges: list
    n_bins: np.ndarray
    n_rows: int

    @property
    def n_features(self) -> int:
        return len(self.bins)


def _parse_cell(text: str) -> float:
    """Parse one CSV cell; empty cells and 'nan' spellings become NaN."""
    stripped = text.strip()
    if stripped == "" or stripped.lower() == "nan":
        return math.nan
    return float(stripped)


def _read_matrix(path, has_header: bool):
    """Read a CSV into a float matrix plus column names."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: file holds no rows")

    if has_header:
        header = [name.strip() for name in rows[0]]
        body = rows[1:]
        if not body:
            raise DataError(f"{path}: header only, no data rows")
    else:
        header = [f"f{j}" for j in range(len(rows[0]))]
        body = rows

    n_columns = len(header)
    values = np.empty((len(body), n_columns), dtype=np.float64)
    for i, row in enumerate(body):
        line_no = i + 2 if has_header else i + 1
        if len(row) != n_columns:
            raise DataError(
                f"{path}: row at line {line_no} has {len(row)} cells, "
                f"expected {n_columns}"
            )
        for j, cell in enumerate(row):
            try:
                values[i, j] = _parse_cell(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell.strip()!r} at line "
                    f"{line_no}, column {header[j]!r}"
                ) from None
    return values, header


def _impute_or_reject(features, feature_names, impute_median, path):
    missing = np.isnan(features)
    if not missing.any():
        return
    if not impute_median:
        bad_row = int(np.flatnonzero(missing.any(axis=1))[0])
        raise DataError(
            f"{path}: missing feature value in data row {bad_row}; "
            "pass impute_median=True to fill with per-feature medians"
        )
    for j in range(features.shape[1]):
        col = features[:, j]
        hole = missing[:, j]
        if not hole.any():
            continue
        observed = col[~hole]
        if observed.size == 0:
            raise DataError(
                f"{path}: feature {feature_names[j]!r} has no observed "
                "values to impute from"
            )
        col[hole] = np.median(observed)


def load_csv(path, target_column, has_header: bool = True,
             impute_median: bool = False) -> RawDataset:
    """Load a comma-delimited numeric file and split off the target column.

    Parameters
    ----------
    path : str or Path
        File to read.
    target_column : str or int
        Column holding the target, by header name or zero-based index.
        Selecting by name requires ``has_header=True``.
    has_header : bool
        Whether the first row holds column names.
    impute_median : bool
        Replace missing feature values (empty cells or ``nan``) with the
        per-feature median of the observed values.  When False any missing
        value is an error.  Missing targets are always an error.

    Raises
    ------
    DataError
        On unreadable files, ragged rows, non-numeric cells, missing or
        out-of-range target columns, or unimputed missing values.
    """
    values, header = _read_matrix(path, has_header)
    n_columns = len(header)
    if isinstance(target_column, str):
        if not has_header:
            raise DataError("target column given by name but file has no header")
        try:
            target_idx = header.index(target_column)
        except ValueError:
            raise DataError(
                f"target column {target_column!r} not found in header {header}"
            ) from None
    else:
        target_idx = int(target_column)
        if target_idx < 0:
            target_idx += n_columns
        if not 0 <= target_idx < n_columns:
            raise DataError(
                f"target column index {target_column} out of range for "
                f"{n_columns} columns"
            )

    targets = values[:, target_idx]
    features = np.delete(values, target_idx, axis=1)
    feature_names = [name for j, name in enumerate(header) if j != target_idx]

    if np.isnan(targets).any():
        bad = int(np.flatnonzero(np.isnan(targets))[0])
        raise DataError(f"{path}: missing target value in data row {bad}")
    _impute_or_reject(features, feature_names, impute_median, path)

    return RawDataset(features=features, targets=targets,
                      feature_names=feature_names)


def load_feature_csv(path, has_header: bool = True,
                     impute_median: bool = False):
    """Load a CSV with no target column; returns (features, names)."""
    features, header = _read_matrix(path, has_header)
    _impute_or_reject(features, header, impute_median, path)
    return features, header


def _column_edges(column: np.ndarray, max_bins: int) -> np.ndarray:
    """Strictly increasing upper edges for one feature column.

    Features with at most ``max_bins`` distinct values keep one bin per
    value (edges at midpoints between neighbours).  Denser columns get
    near-equal-population bins from empirical quantiles.
    """
    distinct = np.unique(column)
    if distinct.size <= max_bins:
        return (distinct[:-1] + distinct[1:]) / 2.0
    grid = np.arange(1, max_bins) / max_bins
    edges = np.unique(np.quantile(column, grid))
    # an edge at or above the maximum would leave the final bin empty
    return edges[edges < distinct[-1]]


def bin_column(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Map raw values to bin indices: smallest ``b`` with ``v <= edges[b]``."""
    return np.searchsorted(edges, values, side="left")


def _bin_dtype(n_bins_max: int):
    if n_bins_max <= 256:
        return np.uint8
    if n_bins_max <= 65536:
        return np.uint16
    return np.uint32


def quantize(raw: RawDataset, max_bins: int = 255) -> BinnedDataset:
    """Quantize every feature column into at most ``max_bins`` bins.

    The default of 255 keeps bin indices within one byte, which matters for
    histogram-building memory bandwidth on wide datasets.
    """
    if max_bins < 1:
        raise DataError(f"max_bins must be >= 1, got {max_bins}")
    if not np.isfinite(raw.features).all():
        raise DataError("features must be finite before binning")
    edges_per_feature = [
        _column_edges(raw.features[:, j], max_bins)
        for j in range(raw.n_features)
    ]
    n_bins = np.array([e.size + 1 for e in edges_per_feature], dtype=np.int64)
    dtype = _bin_dtype(int(n_bins.max())) if n_bins.size else np.uint8
    bins = [
        bin_column(raw.features[:, j], edges_per_feature[j]).astype(dtype)
        for j in range(raw.n_features)
    ]
    return BinnedDataset(bins=bins, bin_edges=edges_per_feature,
                         n_bins=n_bins, n_rows=raw.n_rows)


def bin_matrix(features: np.ndarray, bin_edges: list) -> list:
    """Bin a raw feature matrix with previously computed edges."""
    if features.ndim != 2:
        raise DataError(f"expected a 2-d feature matrix, got ndim={features.ndim}")
    if features.shape[1] != len(bin_edges):
        raise DataError(
            f"feature count mismatch: binner expects {len(bin_edges)} "
            f"features, got {features.shape[1]}"
        )
    return [bin_column(features[:, j], bin_edges[j])
            for j in range(features.shape[1])]
