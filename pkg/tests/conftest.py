import sys
from pathlib import Path

import numpy as np
import pytest

# make the sibling oracle module importable from every test file
sys.path.insert(0, str(Path(__file__).parent))

from mvsboost.data import RawDataset, quantize


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def make_regression_data(n_rows=400, n_features=5, seed=0, noise=0.1):
    """A small nonlinear regression problem plus its binned form."""
    gen = np.random.default_rng(seed)
    X = gen.uniform(0.0, 1.0, size=(n_rows, n_features))
    y = (np.sin(4.0 * X[:, 0]) + 2.0 * X[:, 1]
         - X[:, 2] ** 2 + noise * gen.normal(size=n_rows))
    return X, y


def make_classification_data(n_rows=400, n_features=5, seed=0, slope=2.0):
    gen = np.random.default_rng(seed)
    X = gen.uniform(0.0, 1.0, size=(n_rows, n_features))
    score = np.sin(4.0 * X[:, 0]) + 2.0 * X[:, 1] - X[:, 2] ** 2
    score = (score - score.mean()) / score.std()
    y = (gen.random(n_rows) < 1.0 / (1.0 + np.exp(-slope * score)))
    return X, y.astype(np.float64)


def binned_of(X, y, max_bins=63):
    return quantize(RawDataset(features=np.asarray(X, dtype=np.float64),
                               targets=np.asarray(y, dtype=np.float64),
                               feature_names=None), max_bins=max_bins)
