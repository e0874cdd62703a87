"""Tabular data handling: CSV ingestion, preprocessing and the toy generator.

All transformations return new :class:`TabularDataset` instances; datasets are
never modified in place.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

TOY_FEATURES = ("X1", "X2", "X3", "X4", "X5", "X6")


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class TabularDataset:
    """Numeric feature matrix with a target column.

    ``values`` always holds the continuous values.  After :func:`discretize`
    the per-column bin edges and midpoints are populated for the features and
    for the target.
    """

    values: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...]
    target_name: str = "y"
    bin_edges: tuple[np.ndarray, ...] | None = None
    bin_midpoints: tuple[np.ndarray, ...] | None = None
    target_bin_edges: np.ndarray | None = None
    target_bin_midpoints: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        target = np.asarray(self.target, dtype=float)
        if values.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {values.shape}")
        if target.shape != (values.shape[0],):
            raise DataError("target length must match the number of rows")
        if len(self.feature_names) != values.shape[1]:
            raise DataError("one feature name per column is required")
        values.setflags(write=False)
        target.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def is_discretized(self) -> bool:
        return self.bin_edges is not None

    @property
    def n_bins(self) -> int:
        self._require_bins()
        return max(len(m) for m in (*self.bin_midpoints, self.target_bin_midpoints))

    def stacked(self) -> np.ndarray:
        """Return the M x (N+1) matrix ``[X, y]``."""
        return np.column_stack([self.values, self.target])

    def _require_bins(self):
        if not self.is_discretized:
            raise DataError("dataset has not been discretized")

    def edges(self, column: int) -> np.ndarray:
        """Bin edges of a stacked column (index ``n_features`` is the target)."""
        self._require_bins()
        if column == self.n_features:
            return self.target_bin_edges
        return self.bin_edges[column]

    def midpoints(self, column: int) -> np.ndarray:
        self._require_bins()
        if column == self.n_features:
            return self.target_bin_midpoints
        return self.bin_midpoints[column]

    @cached_property
    def _bin_codes(self) -> np.ndarray:
        self._require_bins()
        codes = np.column_stack(
            [assign_bins(self.values[:, j], self.bin_edges[j]) for j in range(self.n_features)]
            + [assign_bins(self.target, self.target_bin_edges)]
        )
        codes.setflags(write=False)
        return codes

    def bin_index(self, column: int) -> np.ndarray:
        """Bin assignment of every row for a stacked column (computed once)."""
        if not -1 < column <= self.n_features:
            raise IndexError(f"column {column} out of range")
        return self._bin_codes[:, column]

    def subset_rows(self, rows: np.ndarray) -> "TabularDataset":
        rows = np.asarray(rows)
        return replace(self, values=self.values[rows], target=self.target[rows])

    def drop_features(self, columns: Sequence[int]) -> "TabularDataset":
        keep = [j for j in range(self.n_features) if j not in set(columns)]
        kwargs = {}
        if self.is_discretized:
            kwargs["bin_edges"] = tuple(self.bin_edges[j] for j in keep)
            kwargs["bin_midpoints"] = tuple(self.bin_midpoints[j] for j in keep)
        return replace(
            self,
            values=self.values[:, keep],
            feature_names=tuple(self.feature_names[j] for j in keep),
            **kwargs,
        )


@dataclass(frozen=True)
class SubsampleSet:
    """Collection of row-index subsets (0-based) used for importance estimates."""

    subsets: tuple[np.ndarray, ...]
    seed: int | None = None
    count: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "subsets", tuple(np.asarray(s, dtype=np.intp) for s in self.subsets))
        object.__setattr__(self, "count", len(self.subsets))

    def __len__(self):
        return self.count

    def __iter__(self):
        return iter(self.subsets)

    def __getitem__(self, k):
        return self.subsets[k]


def load_csv(path: str | Path, target_column: str = "y", delimiter: str = ",") -> TabularDataset:
    """Read a headed CSV file; every non-target column becomes a feature."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if target_column not in header:
            raise DataError(f"target column {target_column!r} not found in {path}")
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(record)}")
            parsed = []
            for name, cell in zip(header, record):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {name!r}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(value):
                    raise DataError(f"{path}: row {lineno}, column {name!r}: non-finite value {cell!r}")
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path} has no data rows")
    table = np.array(rows, dtype=float)
    t = header.index(target_column)
    features = [j for j in range(len(header)) if j != t]
    return TabularDataset(
        values=table[:, features],
        target=table[:, t],
        feature_names=tuple(header[j] for j in features),
        target_name=target_column,
    )


def save_csv(data: TabularDataset, path: str | Path, precision: int = 6) -> None:
    """Write features then the target column, ``precision`` decimals."""
    fmt = f"{{:.{precision}f}}"
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*data.feature_names, data.target_name])
        for row, y in zip(data.values, data.target):
            writer.writerow([fmt.format(v) for v in row] + [fmt.format(y)])


def _gaussian_scores(column: np.ndarray) -> np.ndarray:
    ranks = stats.rankdata(column)
    return stats.norm.ppf((ranks - 0.5) / len(column))


def quantile_gaussianize(data: TabularDataset, include_target: bool = True) -> TabularDataset:
    """Map each column to standard-normal scores of its empirical ranks.

    Rank ``r`` of ``M`` becomes ``Phi^-1((r - 0.5) / M)``; ties share their
    average rank.  Constant columns are passed through unchanged.
    """
    if data.n_rows < 10:
        logger.warning("quantile_gaussianize on %d rows; ranks are coarse", data.n_rows)
    values = np.array(data.values)
    for j in range(data.n_features):
        if np.ptp(values[:, j]) == 0:
            logger.warning("feature %r is constant; left unchanged", data.feature_names[j])
            continue
        values[:, j] = _gaussian_scores(values[:, j])
    target = np.array(data.target)
    if include_target:
        if np.ptp(target) == 0:
            logger.warning("target is constant; left unchanged")
        else:
            target = _gaussian_scores(target)
    return replace(data, values=values, target=target)


def trim_outliers(
    data: TabularDataset, k_sigma: float = 4.0, include_target: bool = False
) -> tuple[TabularDataset, int]:
    """Drop rows holding any value more than ``k_sigma`` deviations from the mean.

    Means and standard deviations come from the data before removal.  Returns
    the trimmed dataset and the number of removed rows.
    """
    if not k_sigma > 0:
        raise ValueError("k_sigma must be positive")
    table = data.stacked() if include_target else data.values
    mean = table.mean(axis=0)
    std = table.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    z = np.abs(table - mean) / safe
    z[:, std == 0] = 0.0
    keep = np.all(z <= k_sigma, axis=1)
    if not keep.any():
        raise DataError("outlier trimming removed every row")
    removed = int((~keep).sum())
    if removed:
        logger.info("trim_outliers removed %d of %d rows", removed, data.n_rows)
    return data.subset_rows(np.flatnonzero(keep)), removed


def assign_bins(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Index of the equal-width bin holding each value (values outside are clipped)."""
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def _equal_width_edges(column: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = float(column.min()), float(column.max())
    if lo == hi:
        return np.linspace(lo - 0.5, hi + 0.5, bins + 1)
    return np.linspace(lo, hi, bins + 1)


def discretize(data: TabularDataset, bins: int = 10) -> TabularDataset:
    """Attach ``bins`` equal-width bins spanning ``[min, max]`` of every column."""
    if bins < 2:
        raise ValueError("bins must be at least 2")
    edges, mids = [], []
    for j, column in enumerate(data.stacked().T):
        if len(np.unique(column)) < bins:
            name = data.target_name if j == data.n_features else data.feature_names[j]
            logger.warning("column %r has fewer distinct values than %d bins", name, bins)
        e = _equal_width_edges(column, bins)
        edges.append(e)
        mids.append(0.5 * (e[:-1] + e[1:]))
    return replace(
        data,
        bin_edges=tuple(edges[:-1]),
        bin_midpoints=tuple(mids[:-1]),
        target_bin_edges=edges[-1],
        target_bin_midpoints=mids[-1],
    )


def make_subsamples(
    M: int,
    n_subsets: int = 200,
    fraction: float = 0.8,
    seed: int | None = 0,
    pool: np.ndarray | None = None,
) -> SubsampleSet:
    """Draw ``n_subsets`` index sets of size ``floor(fraction * M)``.

    Each set is sampled without replacement.  When ``pool`` is given the
    drawn positions index into it, so subsets live in the pool's row space.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    size = int(math.floor(fraction * M))
    if size < 2:
        raise ValueError(f"fraction * M = {fraction * M:g} leaves fewer than 2 rows per subset")
    if pool is not None and len(pool) != M:
        raise ValueError("pool length must equal M")
    rng = np.random.default_rng(seed)
    subsets = []
    for _ in range(n_subsets):
        pick = rng.permutation(M)[:size]
        subsets.append(pick if pool is None else np.asarray(pool)[pick])
    return SubsampleSet(tuple(subsets), seed=seed)


def train_eval_split(M: int, train_fraction: float = 0.5, seed: int | None = 0):
    """Random partition of ``range(M)`` into sorted train and evaluation rows."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(M)
    n_train = int(round(train_fraction * M))
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def generate_toy(n_samples: int = 800, seed: int | None = 0) -> TabularDataset:
    """Six-feature benchmark with known importance tiers.

    The target copies one of the features (or a sum of them) according to a
    uniform draw ``u``; ``X7``, ``X8``, ``X9`` and ``u`` are latent.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    x1 = rng.gamma(shape=2.0, scale=2.0, size=n_samples)
    x2 = rng.beta(0.5, 0.5, size=n_samples)
    x3 = x1 * x2
    x4 = -rng.exponential(scale=1 / 0.2, size=n_samples)
    x5 = np.sin(x4)
    x7 = rng.binomial(1, 0.7, size=n_samples)
    x8 = rng.normal(-5.0, 1.0, size=n_samples)
    x9 = rng.normal(5.0, 1.0, size=n_samples)
    x6 = x7 * x8 + (1 - x7) * x9
    u = rng.uniform(0.0, 1.0, size=n_samples)
    y = np.select(
        [u <= 0.15, u <= 0.3, u <= 0.5, u <= 0.65, u <= 0.75, u <= 0.85, u <= 0.95],
        [x1, x2, x3, x1 + x2 + x3, x4, x5, x4 + x5],
        default=x6,
    )
    return TabularDataset(
        values=np.column_stack([x1, x2, x3, x4, x5, x6]),
        target=y,
        feature_names=TOY_FEATURES,
        target_name="y",
    )
