import numpy as np
import pytest

from nnmf.data import ObservationSet


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_observations(seed, n_rows, n_cols, n_obs, value_scale=1.0):
    """Distinct (row, col) pairs with Gaussian values, deterministic in seed."""
    rng = np.random.default_rng(seed)
    pairs = [(r, c) for r in range(n_rows) for c in range(n_cols)]
    idx = rng.permutation(len(pairs))[:n_obs]
    rows = np.array([pairs[i][0] for i in idx], dtype=np.int64)
    cols = np.array([pairs[i][1] for i in idx], dtype=np.int64)
    values = value_scale * rng.standard_normal(n_obs)
    return ObservationSet(n_rows, n_cols, rows, cols, values)


def dense_observations(n_rows, n_cols, values):
    """Fully observed array from a dense matrix of values."""
    values = np.asarray(values, dtype=np.float64)
    rows, cols = np.mgrid[0:n_rows, 0:n_cols]
    return ObservationSet(
        n_rows, n_cols, rows.ravel(), cols.ravel(), values.ravel()
    )


def low_rank_observations(seed, n_rows, n_cols, rank, noise=0.0, scale=1.0):
    """Fully observed array with an exact rank-`rank` mean structure."""
    rng = np.random.default_rng(seed)
    A = scale * rng.standard_normal((n_rows, rank))
    B = scale * rng.standard_normal((n_cols, rank))
    X = A @ B.T
    if noise:
        X = X + noise * rng.standard_normal(X.shape)
    return dense_observations(n_rows, n_cols, X)
