"""Pairwise MRF potentials on a discrete grid and the factors d, e, F.

For a feature ``i`` and the target ``y`` the joint restricted to one data row
factorizes (up to terms that cancel) as ``d(x_i) F(x_i, y) e(y)``:

* ``d`` collects the node potential of ``x_i`` and its pair potentials with
  every neighbour other than ``y``, at the row's neighbour values;
* ``e`` does the same for ``y``;
* ``F`` is the pair potential between ``x_i`` and ``y``.

Everything is kept in log space.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import TabularDataset
from .graph import PrecisionModel, neighbors
from .kernels import DegeneratePotentialError

LOG_CLAMP = -700.0


def log_pair_potential(model: PrecisionModel, s: int, t: int, x_s: float, x_t: float) -> float:
    """``-1/2 x_s L_st x_t``: one ordered (s, t) half of the Gaussian cross term.

    The joint log-density carries ``-x_s L_st x_t`` per unordered pair, so
    factor assembly adds both orientations.
    """
    if s == t:
        raise ValueError("pair potential needs two distinct nodes")
    return -0.5 * x_s * model.precision[s, t] * x_t


def log_node_potential(model: PrecisionModel, s: int, x_s):
    """``-1/2 L_ss x_s^2 + eta_s x_s`` with ``eta = L mu``."""
    return -0.5 * model.precision[s, s] * np.square(x_s) + model.eta[s] * x_s


@dataclass(frozen=True)
class PotentialTable:
    log_F: np.ndarray
    log_d: np.ndarray
    log_e: np.ndarray
    log_f_obs: float
    x_bin: int
    y_bin: int


def _clamp(a):
    return np.maximum(a, LOG_CLAMP)


def assemble_factors(model: PrecisionModel, data: TabularDataset, feature: int, row: int) -> PotentialTable:
    """Factors for one (feature, row) pair, evaluated potential by potential."""
    n = data.n_features
    target = n
    if not 0 <= feature < n:
        raise IndexError(f"feature {feature} out of range")
    if model.n_nodes != n + 1:
        raise ValueError("precision model must cover every feature plus the target")
    xs = data.midpoints(feature)
    ys = data.midpoints(target)
    observed = np.append(data.values[row], data.target[row])

    log_d = np.array([log_node_potential(model, feature, m) for m in xs])
    for j in neighbors(model, feature):
        if j == target:
            continue
        for b, m in enumerate(xs):
            log_d[b] += log_pair_potential(model, feature, j, m, observed[j])
            log_d[b] += log_pair_potential(model, j, feature, observed[j], m)

    log_e = np.array([log_node_potential(model, target, m) for m in ys])
    for j in neighbors(model, target):
        if j == feature:
            continue
        for c, m in enumerate(ys):
            log_e[c] += log_pair_potential(model, target, j, m, observed[j])
            log_e[c] += log_pair_potential(model, j, target, observed[j], m)

    log_F = np.zeros((len(xs), len(ys)))
    if model.adjacency[feature, target]:
        for b, mx in enumerate(xs):
            for c, my in enumerate(ys):
                log_F[b, c] = log_pair_potential(model, feature, target, mx, my) + log_pair_potential(
                    model, target, feature, my, mx
                )
    x_bin = int(data.bin_index(feature)[row])
    y_bin = int(data.bin_index(target)[row])
    log_F = _clamp(log_F)
    return PotentialTable(
        log_F=log_F,
        log_d=_clamp(log_d),
        log_e=_clamp(log_e),
        log_f_obs=float(log_F[x_bin, y_bin]),
        x_bin=x_bin,
        y_bin=y_bin,
    )


def log_ratio(table: PotentialTable) -> float:
    """``log( f * d'Fe / ((d'F_y) (F_x e)) )`` by direct log-sum-exp reductions."""
    d, F, e = table.log_d, table.log_F, table.log_e
    num = logsumexp(d[:, None] + F + e[None, :])
    den_y = logsumexp(d + F[:, table.y_bin])
    den_x = logsumexp(F[table.x_bin, :] + e)
    if not np.isfinite([num, den_y, den_x]).all():
        raise DegeneratePotentialError("potential reduction underflowed")
    return float(table.log_f_obs + num - den_y - den_x)


@dataclass(frozen=True)
class RowFactors:
    """Factors for every row of one feature; ``log_F`` is shared."""

    log_d: np.ndarray
    log_F: np.ndarray
    log_e: np.ndarray
    x_bin: np.ndarray
    y_bin: np.ndarray


@dataclass(frozen=True)
class GaussianFactors:
    """Per-row Gaussian factors in compact form.

    ``log d[k] = max(node_x - field_x[k] * xs, LOG_CLAMP)`` and similarly for
    ``log e``; ``log_F`` is shared by all rows.
    """

    node_x: np.ndarray
    xs: np.ndarray
    field_x: np.ndarray
    node_y: np.ndarray
    ys: np.ndarray
    field_y: np.ndarray
    log_F: np.ndarray
    x_bin: np.ndarray
    y_bin: np.ndarray

    def expand(self) -> RowFactors:
        log_d = self.node_x[None, :] - self.field_x[:, None] * self.xs[None, :]
        log_e = self.node_y[None, :] - self.field_y[:, None] * self.ys[None, :]
        return RowFactors(_clamp(log_d), self.log_F, _clamp(log_e), self.x_bin, self.y_bin)


def gaussian_factors(
    model: PrecisionModel, data: TabularDataset, feature: int, rows: np.ndarray | None = None
) -> GaussianFactors:
    """Vectorized :func:`assemble_factors` over rows, in compact form."""
    n = data.n_features
    target = n
    if model.n_nodes != n + 1:
        raise ValueError("precision model must cover every feature plus the target")
    lam = model.precision
    x_bin = data.bin_index(feature)
    y_bin = data.bin_index(target)
    xs = data.midpoints(feature)
    ys = data.midpoints(target)

    def field(node, other):
        nb = [j for j in neighbors(model, node) if j != other]
        if not nb:
            return np.zeros(data.n_rows)
        cols = [data.target if j == target else data.values[:, j] for j in nb]
        return np.column_stack(cols) @ lam[nb, node]

    field_x = field(feature, target)
    field_y = field(target, feature)
    if rows is not None:
        field_x, field_y, x_bin, y_bin = field_x[rows], field_y[rows], x_bin[rows], y_bin[rows]
    if model.adjacency[feature, target]:
        log_F = _clamp(-lam[feature, target] * np.outer(xs, ys))
    else:
        log_F = np.zeros((len(xs), len(ys)))
    return GaussianFactors(
        log_node_potential(model, feature, xs),
        xs,
        field_x,
        log_node_potential(model, target, ys),
        ys,
        field_y,
        log_F,
        x_bin,
        y_bin,
    )


def gaussian_row_factors(
    model: PrecisionModel, data: TabularDataset, feature: int, rows: np.ndarray | None = None
) -> RowFactors:
    """Vectorized :func:`assemble_factors` over rows."""
    return gaussian_factors(model, data, feature, rows).expand()


class DiscreteMRF:
    """Pairwise MRF over finite state spaces, given by log node and edge tables.

    ``pair_log[(s, t)]`` (``s < t``) has shape ``(n_states[s], n_states[t])``.
    """

    def __init__(self, n_states, node_log, pair_log):
        self.n_states = tuple(int(k) for k in n_states)
        self.node_log = [np.asarray(a, dtype=float) for a in node_log]
        self.pair_log = {}
        for (s, t), table in pair_log.items():
            table = np.asarray(table, dtype=float)
            if s > t:
                s, t, table = t, s, table.T
            if table.shape != (self.n_states[s], self.n_states[t]):
                raise ValueError(f"edge ({s}, {t}) table has shape {table.shape}")
            self.pair_log[(s, t)] = table

    @classmethod
    def random(cls, n_nodes, n_states, rng, edge_prob=0.7, scale=1.5):
        if np.isscalar(n_states):
            n_states = [int(n_states)] * n_nodes
        node_log = [rng.normal(0, scale, size=k) for k in n_states]
        pair_log = {}
        for s, t in itertools.combinations(range(n_nodes), 2):
            if rng.uniform() < edge_prob:
                pair_log[(s, t)] = rng.normal(0, scale, size=(n_states[s], n_states[t]))
        return cls(n_states, node_log, pair_log)

    @property
    def n_nodes(self) -> int:
        return len(self.n_states)

    def pair(self, s, t):
        """Log table indexed ``[x_s, x_t]``, or ``None`` when not adjacent."""
        if s < t:
            return self.pair_log.get((s, t))
        table = self.pair_log.get((t, s))
        return None if table is None else table.T

    def neighbors(self, s):
        return [t for t in range(self.n_nodes) if t != s and self.pair(s, t) is not None]

    def states(self) -> np.ndarray:
        return np.array(list(itertools.product(*(range(k) for k in self.n_states))), dtype=np.intp)

    def joint(self) -> np.ndarray:
        """Normalized probability table with one axis per node."""
        logp = np.zeros(self.n_states)
        for s, table in enumerate(self.node_log):
            shape = [1] * self.n_nodes
            shape[s] = -1
            logp = logp + table.reshape(shape)
        for (s, t), table in self.pair_log.items():
            shape = [1] * self.n_nodes
            shape[s], shape[t] = table.shape
            logp = logp + table.reshape(shape)
        logp -= logsumexp(logp)
        return np.exp(logp)

    def row_factors(self, feature: int, target: int, states: np.ndarray) -> RowFactors:
        """Factors of ``feature`` against ``target`` for each configuration row."""
        k = len(states)
        log_d = np.tile(self.node_log[feature], (k, 1))
        for j in self.neighbors(feature):
            if j != target:
                log_d += self.pair(feature, j)[:, states[:, j]].T
        log_e = np.tile(self.node_log[target], (k, 1))
        for j in self.neighbors(target):
            if j != feature:
                log_e += self.pair(target, j)[:, states[:, j]].T
        F = self.pair(feature, target)
        if F is None:
            F = np.zeros((self.n_states[feature], self.n_states[target]))
        return RowFactors(log_d, np.array(F), log_e, states[:, feature].copy(), states[:, target].copy())
