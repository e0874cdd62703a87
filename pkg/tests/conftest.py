import numpy as np
import pytest

from cid.data import TabularDataset, discretize


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(X, y, names=None, bins=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or tuple(f"X{j + 1}" for j in range(X.shape[1]))
    data = TabularDataset(X, np.asarray(y, dtype=float), names)
    return discretize(data, bins) if bins else data


def chain_precision(p=5, off=-0.4):
    lam = np.eye(p)
    for k in range(p - 1):
        lam[k, k + 1] = lam[k + 1, k] = off
    return lam
