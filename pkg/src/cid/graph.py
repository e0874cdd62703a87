"""Sparse Gaussian precision estimation over the stacked ``[X, y]`` columns.

The target is always the last node (index ``n_features``).
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import TabularDataset

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """Solver hit ``max_iter``; carries the last iterate and its duality gap."""

    def __init__(self, message, precision, gap):
        super().__init__(message)
        self.precision = precision
        self.gap = gap


@dataclass(frozen=True)
class PrecisionModel:
    precision: np.ndarray
    mean: np.ndarray
    rho: float = 0.0
    names: tuple[str, ...] | None = None
    zero_tol: float = ZERO_TOL
    eta: np.ndarray = field(init=False, repr=False)
    adjacency: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lam = np.asarray(self.precision, dtype=float)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise ValueError("precision must be a square matrix")
        lam = 0.5 * (lam + lam.T)
        mean = np.asarray(self.mean, dtype=float)
        if mean.shape != (lam.shape[0],):
            raise ValueError("mean length must match the precision matrix")
        adj = np.abs(lam) > self.zero_tol
        np.fill_diagonal(adj, False)
        for name, arr in (("precision", lam), ("mean", mean), ("eta", lam @ mean), ("adjacency", adj)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return self.precision.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency))
        return [(int(a), int(b)) for a, b in zip(i, j)]

    def to_json(self) -> str:
        return json.dumps(
            {
                "precision": self.precision.tolist(),
                "mean": self.mean.tolist(),
                "rho": self.rho,
                "names": list(self.names) if self.names else None,
                "edges": self.edges(),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "PrecisionModel":
        doc = json.loads(text)
        names = tuple(doc["names"]) if doc.get("names") else None
        return cls(np.array(doc["precision"]), np.array(doc["mean"]), float(doc["rho"]), names)


def neighbors(model: PrecisionModel, node: int) -> np.ndarray:
    """Indices adjacent to ``node`` in the precision graph."""
    if not 0 <= node < model.n_nodes:
        raise IndexError(f"node {node} out of range")
    return np.flatnonzero(model.adjacency[node])


def empirical_covariance(data: TabularDataset | np.ndarray) -> np.ndarray:
    """Population (1/M) covariance of ``[X, y]``, or of a raw matrix."""
    table = data.stacked() if isinstance(data, TabularDataset) else np.asarray(data, dtype=float)
    if table.ndim == 1:
        table = table[:, None]
    if table.shape[0] < 2:
        raise ValueError("need at least two rows")
    centered = table - table.mean(axis=0)
    S = centered.T @ centered / table.shape[0]
    return 0.5 * (S + S.T)


def glasso_objective(precision: np.ndarray, S: np.ndarray, rho: float) -> float:
    """``-log det(L) + tr(S L) + rho * sum_{i != j} |L_ij|``."""
    sign, logdet = np.linalg.slogdet(precision)
    if sign <= 0:
        return np.inf
    off = np.abs(precision).sum() - np.abs(np.diag(precision)).sum()
    return -logdet + np.sum(S * precision) + rho * off


def duality_gap(precision: np.ndarray, S: np.ndarray, rho: float) -> float:
    off = np.abs(precision).sum() - np.abs(np.diag(precision)).sum()
    return float(np.sum(S * precision) + rho * off - precision.shape[0])


def _lasso_cd(W11, s12, rho, beta, tol, max_iter):
    # min 0.5 b'W11 b - s12'b + rho |b|_1, coordinate-wise
    p = len(s12)
    grad = W11 @ beta
    for _ in range(max_iter):
        delta = 0.0
        for k in range(p):
            old = beta[k]
            r = s12[k] - grad[k] + W11[k, k] * old
            new = np.sign(r) * max(abs(r) - rho, 0.0) / W11[k, k]
            if new != old:
                grad += W11[:, k] * (new - old)
                beta[k] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return beta


def _precision_from_betas(S, W, betas):
    p = S.shape[0]
    lam = np.zeros_like(S)
    for j in range(p):
        idx = np.delete(np.arange(p), j)
        b = betas[j]
        denom = W[j, j] - W[idx, j] @ b
        lam[j, j] = 1.0 / denom
        lam[idx, j] = -b * lam[j, j]
    return 0.5 * (lam + lam.T)


def graphical_lasso(
    S: np.ndarray,
    rho: float = 0.0,
    tol: float = 1e-4,
    max_iter: int = 200,
    mean: np.ndarray | None = None,
    inner_tol: float = 1e-10,
    return_history: bool = False,
):
    """Block coordinate descent for the l1-penalized Gaussian likelihood.

    Minimizes ``-log det L + tr(S L) + rho * ||offdiag(L)||_1``; the diagonal
    is not penalized.  Each sweep solves one lasso problem per column of the
    working covariance; iteration stops once the mean absolute change of the
    working covariance drops below ``tol``.

    Returns a :class:`PrecisionModel` (and the per-sweep objective values when
    ``return_history`` is set).
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("S must be square")
    if not np.allclose(S, S.T, atol=1e-12):
        raise ValueError("S must be symmetric")
    if np.any(np.diag(S) <= 0):
        raise ValueError("diagonal of S must be strictly positive")
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    p = S.shape[0]
    if mean is None:
        mean = np.zeros(p)
    if p == 1:
        model = PrecisionModel(1.0 / S, mean, rho)
        return (model, [glasso_objective(model.precision, S, rho)]) if return_history else model

    W = S.copy()
    betas = [np.zeros(p - 1) for _ in range(p)]
    history = []
    n_off = p * (p - 1)
    for sweep in range(max_iter):
        W_old = W.copy()
        for j in range(p):
            idx = np.delete(np.arange(p), j)
            W11 = W[np.ix_(idx, idx)]
            betas[j] = _lasso_cd(W11, S[idx, j], rho, betas[j], inner_tol, 1000)
            w12 = W11 @ betas[j]
            W[idx, j] = w12
            W[j, idx] = w12
        lam = _precision_from_betas(S, W, betas)
        history.append(glasso_objective(lam, S, rho))
        change = np.abs(W - W_old).sum() / n_off
        if change < tol:
            break
    else:
        raise ConvergenceError(
            f"graphical lasso did not converge in {max_iter} sweeps",
            lam,
            duality_gap(lam, S, rho),
        )
    model = PrecisionModel(lam, mean, rho)
    return (model, history) if return_history else model


def default_rho_grid(S: np.ndarray, n: int = 8) -> np.ndarray:
    off = np.abs(S - np.diag(np.diag(S))).max()
    if off == 0:
        return np.zeros(1)
    return off * np.logspace(-2, 0, n)


def _gaussian_loglik(precision, S_test):
    sign, logdet = np.linalg.slogdet(precision)
    return 0.5 * (logdet - np.sum(S_test * precision))


def select_rho_cv(
    data: TabularDataset | np.ndarray,
    grid: Sequence[float] | None = None,
    folds: int = 5,
    seed: int | None = 0,
    tol: float = 1e-4,
    max_iter: int = 200,
) -> float:
    """Pick the penalty maximizing mean held-out Gaussian log-likelihood.

    Ties go to the larger (sparser) value.
    """
    table = data.stacked() if isinstance(data, TabularDataset) else np.asarray(data, dtype=float)
    if grid is None:
        grid = default_rho_grid(empirical_covariance(table))
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("rho grid is empty")
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if grid.size == 1:
        return float(grid[0])
    order = np.random.default_rng(seed).permutation(len(table))
    chunks = np.array_split(order, folds)
    scores = np.zeros(grid.size)
    counts = np.zeros(grid.size)
    for k, test_rows in enumerate(chunks):
        train = table[np.setdiff1d(order, test_rows)]
        test = table[test_rows]
        S_train = empirical_covariance(train)
        if np.any(np.diag(S_train) <= 0) or len(test) == 0:
            warnings.warn(f"fold {k} has a degenerate covariance; skipped")
            continue
        centered = test - train.mean(axis=0)
        S_test = centered.T @ centered / len(test)
        for g, rho in enumerate(grid):
            try:
                model = graphical_lasso(S_train, rho, tol=tol, max_iter=max_iter)
            except (ConvergenceError, np.linalg.LinAlgError) as exc:
                warnings.warn(f"fold {k}, rho={rho:g}: {exc}; skipped")
                continue
            scores[g] += _gaussian_loglik(model.precision, S_test)
            counts[g] += 1
    if not counts.any():
        raise ValueError("every cross-validation fold was degenerate")
    mean_scores = np.where(counts > 0, scores / np.maximum(counts, 1), -np.inf)
    best = mean_scores.max()
    candidates = np.flatnonzero(mean_scores >= best - 1e-12 * max(1.0, abs(best)))
    return float(grid[candidates].max())


def constrained_mle(
    S: np.ndarray,
    edges: Iterable[tuple[int, int]],
    tol: float = 1e-8,
    max_iter: int = 1000,
    mean: np.ndarray | None = None,
) -> PrecisionModel:
    """Gaussian maximum likelihood restricted to a given edge support.

    Iterative proportional scaling over the edge cliques: each update makes
    the model covariance match ``S`` on one clique.
    """
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    if mean is None:
        mean = np.zeros(p)
    cliques = sorted({tuple(sorted((int(a), int(b)))) for a, b in edges if a != b})
    for a, b in cliques:
        if not (0 <= a < p and 0 <= b < p):
            raise ValueError(f"edge ({a}, {b}) outside {p} nodes")
    lam = np.diag(1.0 / np.diag(S))
    for _ in range(max_iter):
        worst = 0.0
        for clique in cliques:
            c = list(clique)
            sigma = np.linalg.inv(lam)
            worst = max(worst, np.abs(sigma[np.ix_(c, c)] - S[np.ix_(c, c)]).max())
            lam[np.ix_(c, c)] += np.linalg.inv(S[np.ix_(c, c)]) - np.linalg.inv(sigma[np.ix_(c, c)])
        if worst < tol:
            break
    else:
        raise ConvergenceError("proportional scaling did not converge", lam, np.nan)
    return PrecisionModel(lam, mean, 0.0)


def read_edge_list(path: str | Path, n_features: int) -> list[tuple[int, int]]:
    """Parse ``i j`` lines (1-based feature indices, ``y`` for the target)."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two node names, got {line!r}")
        nodes = []
        for tok in parts:
            if tok.lower() == "y":
                nodes.append(n_features)
                continue
            try:
                k = int(tok)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad node {tok!r}") from None
            if not 1 <= k <= n_features:
                raise ValueError(f"{path}:{lineno}: node {k} outside 1..{n_features}")
            nodes.append(k - 1)
        edges.append((nodes[0], nodes[1]))
    return edges


def fit_precision(
    data: TabularDataset,
    rho: float | None = None,
    grid: Sequence[float] | None = None,
    folds: int = 5,
    prior_edges: Iterable[tuple[int, int]] | None = None,
    seed: int | None = 0,
    tol: float = 1e-4,
    max_iter: int = 200,
) -> PrecisionModel:
    """Infer the Gaussian MRF over ``[X, y]``: prior support, fixed or CV-chosen rho."""
    S = empirical_covariance(data)
    mean = data.stacked().mean(axis=0)
    names = (*data.feature_names, data.target_name)
    if prior_edges is not None:
        model = constrained_mle(S, prior_edges, mean=mean)
        return PrecisionModel(model.precision, mean, 0.0, names)
    if rho is None:
        rho = select_rho_cv(data, grid, folds, seed=seed, tol=tol, max_iter=max_iter)
        logger.info("cross-validated rho = %g", rho)
    model = graphical_lasso(S, rho, tol=tol, max_iter=max_iter)
    return PrecisionModel(model.precision, mean, rho, names)
