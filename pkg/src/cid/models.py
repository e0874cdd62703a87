"""Predictive models and losses used by the importance estimators."""
from __future__ import annotations

import logging
from typing import Callable, Protocol

import numpy as np
from sklearn.ensemble import ExtraTreesRegressor

logger = logging.getLogger(__name__)


def mse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(np.mean((np.asarray(y_true) - np.asarray(y_pred)) ** 2))


LOSSES: dict[str, Callable[[np.ndarray, np.ndarray], float]] = {"mse": mse}


def get_loss(name: str):
    try:
        return LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; available: {sorted(LOSSES)}") from None


class PredictiveModel(Protocol):
    def fit(self, X: np.ndarray, y: np.ndarray) -> "PredictiveModel": ...

    def predict(self, X: np.ndarray) -> np.ndarray: ...


class ExtremelyRandomizedTreesRegressor:
    """Extra-trees ensemble: no bootstrap, one random threshold per candidate feature.

    Thin wrapper over scikit-learn's implementation with the defaults used
    throughout this package.
    """

    def __init__(self, n_trees: int = 100, max_depth: int | None = None, min_leaf: int = 2, seed: int | None = 0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.seed = seed
        self._ensemble = None
        self._constant = None
        self.n_features_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.n_features_ = X.shape[1]
        if len(y) < 2 or np.ptp(y) == 0:
            if len(y) >= 2:
                logger.warning("constant target; fitting a constant predictor")
            self._constant = float(y.mean())
            self._ensemble = None
            return self
        self._constant = None
        self._ensemble = ExtraTreesRegressor(
            n_estimators=self.n_trees,
            max_depth=self.max_depth,
            min_samples_leaf=min(self.min_leaf, max(1, len(y) // 2)),
            max_features=1.0,
            bootstrap=False,
            random_state=self.seed,
        ).fit(X, y)
        return self

    def _check_fitted(self):
        if self._ensemble is None and self._constant is None:
            raise RuntimeError("model is not fitted")

    def predict(self, X):
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        if self._constant is not None:
            return np.full(len(X), self._constant)
        return self._ensemble.predict(X)

    @property
    def trees(self):
        self._check_fitted()
        return [] if self._ensemble is None else list(self._ensemble.estimators_)


def fit_ert(X, y, n_trees: int = 100, max_depth: int | None = None, min_leaf: int = 2, seed: int | None = 0):
    return ExtremelyRandomizedTreesRegressor(n_trees, max_depth, min_leaf, seed).fit(X, y)


def gini_importance(model: ExtremelyRandomizedTreesRegressor) -> np.ndarray:
    """Weighted variance reduction per feature, averaged over trees, summing to 1."""
    trees = model.trees
    total = np.zeros(model.n_features_)
    for tree in trees:
        total += tree.tree_.compute_feature_importances(normalize=False)
    if trees:
        total /= len(trees)
    s = total.sum()
    return total / s if s > 0 else total


class BayesianLinearRegressor:
    """Conjugate Gaussian linear regression with evidence-maximized precisions.

    ``alpha`` is the weight prior precision and ``beta`` the noise precision;
    both are re-estimated by the fixed-point updates of the marginal
    likelihood.  An unpenalized intercept is handled by centering.
    """

    def __init__(self, alpha: float = 1.0, beta: float | None = None, max_iter: int = 500, tol: float = 1e-10,
                 beta_max: float = 1e14):
        self.alpha = alpha
        self.beta = beta
        self.max_iter = max_iter
        self.tol = tol
        self.beta_max = beta_max

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, p = X.shape
        self.x_mean_ = X.mean(axis=0)
        self.y_mean_ = y.mean()
        Xc = X - self.x_mean_
        yc = y - self.y_mean_
        alpha = float(self.alpha)
        var = yc.var()
        beta = float(self.beta) if self.beta is not None else 1.0 / (var if var > 0 else 1.0)
        XtX = Xc.T @ Xc
        Xty = Xc.T @ yc
        eig = np.linalg.eigvalsh(XtX).clip(min=0.0)
        for _ in range(self.max_iter):
            A = alpha * np.eye(p) + beta * XtX
            m = beta * np.linalg.solve(A, Xty)
            lam = beta * eig
            gamma = float(np.sum(lam / (alpha + lam)))
            mm = float(m @ m)
            resid = float(np.sum((yc - Xc @ m) ** 2))
            new_alpha = gamma / mm if mm > 0 else 1e14
            new_beta = (n - gamma) / resid if resid > 0 else self.beta_max
            new_beta = min(new_beta, self.beta_max)
            new_alpha = min(max(new_alpha, 1e-14), 1e14)
            done = abs(new_alpha - alpha) <= self.tol * alpha and abs(new_beta - beta) <= self.tol * beta
            alpha, beta = new_alpha, new_beta
            if done:
                break
        A = alpha * np.eye(p) + beta * XtX
        self.coef_cov_ = np.linalg.inv(A)
        self.coef_ = beta * self.coef_cov_ @ Xty
        self.intercept_ = self.y_mean_ - self.x_mean_ @ self.coef_
        self.alpha_, self.beta_ = alpha, beta
        return self

    def predict(self, X, return_std: bool = False):
        X = np.asarray(X, dtype=float)
        mean = X @ self.coef_ + self.intercept_
        if not return_std:
            return mean
        Xc = X - self.x_mean_
        var = 1.0 / self.beta_ + np.einsum("ij,jk,ik->i", Xc, self.coef_cov_, Xc)
        return mean, np.sqrt(var)
