"""Permutation, univariate and covered-information-corrected importances."""
from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import SubsampleSet, TabularDataset, discretize, quantile_gaussianize
from .entropy import EntropyProfile, entropy_profile
from .graph import PrecisionModel, fit_precision
from .models import BayesianLinearRegressor, get_loss

logger = logging.getLogger(__name__)

DEFAULT_INV_C_GRID = (1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4)


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@contextmanager
def _stage(name: str, timings: dict | None = None):
    t0 = time.perf_counter()
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, str(exc)) from exc
    if timings is not None:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


@dataclass(frozen=True)
class ImportanceEstimate:
    """Importance per (feature, subsample) with median-based ranking."""

    method: str
    feature_names: tuple[str, ...]
    per_subsample: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.per_subsample, dtype=float))
        if values.shape[0] != len(self.feature_names):
            raise ValueError("one row of values per feature is required")
        object.__setattr__(self, "per_subsample", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def median(self) -> np.ndarray:
        return np.median(self.per_subsample, axis=1)

    @property
    def mean(self) -> np.ndarray:
        return self.per_subsample.mean(axis=1)

    @property
    def std(self) -> np.ndarray:
        return self.per_subsample.std(axis=1)

    @property
    def ranking(self) -> np.ndarray:
        """Feature indices from highest to lowest median (stable on ties)."""
        return np.argsort(-self.median, kind="stable")

    def summary(self) -> dict:
        return {
            "features": list(self.feature_names),
            "median": self.median.tolist(),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "ranking": [self.feature_names[i] for i in self.ranking],
        }


def write_importances_csv(estimates: Iterable[ImportanceEstimate], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "feature", "subsample", "value"])
        for est in estimates:
            for i, name in enumerate(est.feature_names):
                for s, v in enumerate(est.per_subsample[i]):
                    w.writerow([est.method, name, s, repr(float(v))])


def read_importances_csv(path: str | Path) -> list[ImportanceEstimate]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for method in dict.fromkeys(r["method"] for r in rows):
        sel = [r for r in rows if r["method"] == method]
        names = list(dict.fromkeys(r["feature"] for r in sel))
        n_sub = 1 + max(int(r["subsample"]) for r in sel)
        values = np.zeros((len(names), n_sub))
        for r in sel:
            values[names.index(r["feature"]), int(r["subsample"])] = float(r["value"])
        out.append(ImportanceEstimate(method, tuple(names), values))
    return out


def write_summary_json(estimates: Iterable[ImportanceEstimate], path: str | Path, extra: dict | None = None) -> None:
    doc = {"methods": {est.method: est.summary() for est in estimates}}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2))


# -- baselines --------------------------------------------------------------

def _random_permutation(rng, n):
    return rng.permutation(n)


def permutation_importance(
    model,
    data: TabularDataset,
    subsamples: SubsampleSet,
    n_permutations: int = 5,
    loss: str = "mse",
    seed: int | None = 0,
    permutation: Callable[[np.random.Generator, int], np.ndarray] = _random_permutation,
    timings: list | None = None,
) -> ImportanceEstimate:
    """Mean loss increase when one column is permuted within each subsample.

    Losses are averaged over the subsample rows, so values are comparable
    across subsample sizes.  ``permutation`` draws the index permutation and
    exists so callers can fix it.
    """
    loss_fn = get_loss(loss)
    if n_permutations < 1:
        raise ValueError("n_permutations must be positive")
    rng = np.random.default_rng(seed)
    n = data.n_features
    values = np.zeros((n, len(subsamples)))
    for k, rows in enumerate(subsamples):
        t0 = time.perf_counter()
        X = data.values[rows]
        y = data.target[rows]
        base = loss_fn(y, model.predict(X))
        batch = []
        for i in range(n):
            for _ in range(n_permutations):
                Xp = X.copy()
                Xp[:, i] = X[permutation(rng, len(rows)), i]
                batch.append(Xp)
        pred = model.predict(np.vstack(batch)).reshape(n, n_permutations, len(rows))
        for i in range(n):
            values[i, k] = np.mean([loss_fn(y, pred[i, p]) - base for p in range(n_permutations)])
        if timings is not None:
            timings.append(time.perf_counter() - t0)
    return ImportanceEstimate("permutation", data.feature_names, values)


def univariate_importance(data: TabularDataset) -> np.ndarray:
    """Absolute Pearson correlation of each feature with the target."""
    X = data.values
    y = data.target
    out = np.zeros(data.n_features)
    yc = y - y.mean()
    ys = np.sqrt(np.sum(yc**2))
    for j in range(data.n_features):
        xc = X[:, j] - X[:, j].mean()
        xs = np.sqrt(np.sum(xc**2))
        if xs == 0 or ys == 0:
            warnings.warn(f"zero variance in {data.feature_names[j]!r} or target; score set to 0")
            continue
        out[j] = min(1.0, abs(float(xc @ yc) / (xs * ys)))
    return out


def univariate_estimate(data: TabularDataset, subsamples: SubsampleSet, timings: list | None = None) -> ImportanceEstimate:
    values = np.zeros((data.n_features, len(subsamples)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k, rows in enumerate(subsamples):
            t0 = time.perf_counter()
            values[:, k] = univariate_importance(data.subset_rows(rows))
            if timings is not None:
                timings.append(time.perf_counter() - t0)
    return ImportanceEstimate("univariate", data.feature_names, values)


# -- maps from entropy aggregates to importance ------------------------------

class LearnedPhi:
    """Bayesian linear map from ``(Hc+, Hc-, Hmi+, Hmi-)`` to permutation importance."""

    def __init__(self, regressor: BayesianLinearRegressor):
        self.regressor = regressor

    def predict(self, H: np.ndarray) -> np.ndarray:
        return self.regressor.predict(np.atleast_2d(H))

    def corrected(self, H: np.ndarray, e: np.ndarray | None = None) -> np.ndarray:
        H0 = np.array(np.atleast_2d(H), dtype=float)
        H0[:, 0] = 0.0
        return self.predict(H0)


def _pairs(profile: EntropyProfile, pi: ImportanceEstimate):
    if pi.per_subsample.shape != profile.hc_plus.shape:
        raise ValueError("entropy profile and permutation importance cover different pairs")
    return profile.pooled(), pi.per_subsample.reshape(-1)


def fit_phi_learned(profile: EntropyProfile, pi: ImportanceEstimate, regressor=None) -> LearnedPhi:
    H, e = _pairs(profile, pi)
    if len(e) < 8:
        raise ValueError(f"need at least 8 training pairs, got {len(e)}")
    regressor = regressor or BayesianLinearRegressor()
    return LearnedPhi(regressor.fit(H, e))


@dataclass
class ParametricPhi:
    """``e = I * g(Hc+) * (1 - Hc+ / Hmi+)`` with ``g = c`` when ``Hc+ > 0`` else 1."""

    c: float
    max_gain: float = 10.0
    cv_errors: dict = field(default_factory=dict)

    def gain(self, hc_plus: np.ndarray, hmi_plus: np.ndarray) -> np.ndarray:
        """Factor ``1 / (g (1 - Hc+/Hmi+))`` applied to ``e``, capped at ``max_gain``."""
        hc_plus = np.asarray(hc_plus, dtype=float)
        hmi_plus = np.asarray(hmi_plus, dtype=float)
        gain = np.ones_like(hc_plus)
        pos = (hc_plus > 0) & (hmi_plus > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            shrink = self.c * (1.0 - hc_plus[pos] / hmi_plus[pos])
            g = np.where(shrink > 0, 1.0 / shrink, np.inf)
        capped = g > self.max_gain
        if capped.any():
            warnings.warn(f"{int(capped.sum())} pairs with Hc+ close to Hmi+; correction capped at {self.max_gain}")
        gain[pos] = np.minimum(g, self.max_gain)
        return gain

    def corrected(self, H: np.ndarray, e: np.ndarray) -> np.ndarray:
        H = np.atleast_2d(H)
        e = np.asarray(e, dtype=float)
        out = np.array(e, dtype=float)
        use = H[:, 0] > 0
        if (use & (H[:, 2] <= 0)).any():
            warnings.warn("pairs with Hmi+ = 0 left uncorrected")
        use &= H[:, 2] > 0
        out[use] = e[use] * self.gain(H[use, 0], H[use, 2])
        return out

    def predict(self, H: np.ndarray, importance: np.ndarray) -> np.ndarray:
        """Permutation importance implied by a total importance ``importance``."""
        H = np.atleast_2d(H)
        return np.asarray(importance) / self.gain(H[:, 0], H[:, 2])


def fit_phi_parametric(
    profile: EntropyProfile,
    pi: ImportanceEstimate,
    c_grid: Sequence[float] | None = None,
    folds: int = 5,
    max_gain: float = 10.0,
    seed: int | None = 0,
) -> ParametricPhi:
    """Choose ``c`` by cross-validated squared residual of the parametric map.

    For each candidate the inverted importances are regressed linearly on
    ``Hmi+`` within the training folds; the held-out residual is
    ``e - phi_c(H)`` with that regression supplying the total importance.
    """
    if c_grid is None:
        c_grid = [1.0 / v for v in DEFAULT_INV_C_GRID]
    H, e = _pairs(profile, pi)
    usable = H[:, 2] > 0
    if not usable.all():
        warnings.warn(f"{int((~usable).sum())} pairs with Hmi+ = 0 excluded from fitting c")
    H, e = H[usable], e[usable]
    if len(c_grid) == 1 or len(e) < folds:
        return ParametricPhi(float(c_grid[0]), max_gain)
    order = np.random.default_rng(seed).permutation(len(e))
    chunks = np.array_split(order, folds)
    errors = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for c in c_grid:
            phi = ParametricPhi(float(c), max_gain)
            total = phi.corrected(H, e)
            sse = 0.0
            for test in chunks:
                train = np.setdiff1d(order, test)
                A = np.column_stack([np.ones(len(train)), H[train, 2]])
                coef, *_ = np.linalg.lstsq(A, total[train], rcond=None)
                pred_total = coef[0] + coef[1] * H[test, 2]
                sse += float(np.sum((e[test] - phi.predict(H[test], pred_total)) ** 2))
            errors[float(c)] = sse
    best = min(errors, key=errors.get)
    return ParametricPhi(best, max_gain, errors)


# -- the full pipeline ------------------------------------------------------

@dataclass
class CIDResult:
    estimate: ImportanceEstimate
    permutation: ImportanceEstimate
    profile: EntropyProfile
    precision: PrecisionModel
    phi: object
    timings: dict = field(default_factory=dict)


def prepare_entropy_data(data: TabularDataset, bins: int = 10, gaussianize: bool = True) -> TabularDataset:
    prepared = quantile_gaussianize(data) if gaussianize else data
    return discretize(prepared, bins)


def cid_importance(
    data: TabularDataset,
    model,
    subsamples: SubsampleSet,
    precision: PrecisionModel | None = None,
    phi_mode: str = "learned",
    *,
    pi: ImportanceEstimate | None = None,
    entropy_data: TabularDataset | None = None,
    bins: int = 10,
    n_permutations: int = 5,
    loss: str = "mse",
    seed: int | None = 0,
    rho: float | None = None,
    rho_grid: Sequence[float] | None = None,
    folds: int = 5,
    prior_edges=None,
    c_grid: Sequence[float] | None = None,
    backend: str | None = None,
) -> CIDResult:
    """Correct permutation importance for information covered by other features.

    Runs permutation importance, infers the Gaussian MRF over ``[X, y]``
    (unless ``precision`` or ``prior_edges`` is given), computes local
    mutual and covered information per row, aggregates them per subsample,
    fits the entropy-to-importance map and evaluates it with the redundant
    covered information set to zero.

    ``data`` holds the values the model sees; ``entropy_data`` (default:
    Gaussianized and discretized ``data``) must share its rows.  Failures
    are re-raised as :class:`PipelineError` tagged with the stage name.
    """
    if phi_mode not in ("learned", "parametric"):
        raise ValueError(f"unknown phi mode {phi_mode!r}")
    timings = {}
    with _stage("permutation", timings):
        if pi is None:
            pi = permutation_importance(model, data, subsamples, n_permutations, loss, seed)
    with _stage("graph", timings):
        if entropy_data is None:
            entropy_data = prepare_entropy_data(data, bins)
        if entropy_data.n_rows != data.n_rows:
            raise ValueError("entropy data must share rows with the model data")
        if precision is None:
            precision = fit_precision(
                entropy_data, rho=rho, grid=rho_grid, folds=folds, prior_edges=prior_edges, seed=seed
            )
    with _stage("entropy", timings):
        profile = entropy_profile(precision, entropy_data, subsamples, backend=backend)
    with _stage("phi", timings):
        H, e = _pairs(profile, pi)
        if phi_mode == "learned":
            phi = fit_phi_learned(profile, pi)
        else:
            phi = fit_phi_parametric(profile, pi, c_grid, seed=seed)
        corrected = phi.corrected(H, e).reshape(pi.per_subsample.shape)
    estimate = ImportanceEstimate("cid", data.feature_names, corrected)
    return CIDResult(estimate, pi, profile, precision, phi, timings)


def _pearson(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.sum(a**2) * np.sum(b**2))
    if denom == 0 or not np.isfinite(denom):
        return None
    return float(a @ b / denom)


def subset_correlation_score(
    data: TabularDataset,
    model_factory: Callable[[], object],
    rankings: Sequence[ImportanceEstimate],
    n_subsets: int = 100,
    subset_size: int | None = None,
    seed: int | None = 0,
    train_rows: np.ndarray | None = None,
    eval_rows: np.ndarray | None = None,
    loss: str = "mse",
) -> dict[str, dict]:
    """Correlation between subset model performance and summed importances.

    For each random feature subset a fresh model is trained; its performance
    is the negated held-out loss.  Returns, per method, the Pearson
    correlation and a ``degenerate`` flag (correlation reported as 0 when
    undefined).
    """
    if len(rankings) < 2:
        raise ValueError("need at least two methods to compare")
    n = data.n_features
    if subset_size is None:
        subset_size = max(1, n // 2)
    if not 1 <= subset_size < n:
        raise ValueError("subset_size must lie in [1, n_features)")
    loss_fn = get_loss(loss)
    rng = np.random.default_rng(seed)
    if train_rows is None or eval_rows is None:
        order = rng.permutation(data.n_rows)
        half = data.n_rows // 2
        train_rows, eval_rows = np.sort(order[:half]), np.sort(order[half:])
    perf, subsets = [], []
    for _ in range(n_subsets):
        cols = np.sort(rng.choice(n, size=subset_size, replace=False))
        try:
            m = model_factory().fit(data.values[np.ix_(train_rows, cols)], data.target[train_rows])
            pred = m.predict(data.values[np.ix_(eval_rows, cols)])
        except Exception as exc:  # a failing subset should not sink the evaluation
            warnings.warn(f"model failed on subset {cols.tolist()}: {exc}; skipped")
            continue
        perf.append(-loss_fn(data.target[eval_rows], pred))
        subsets.append(cols)
    out = {}
    for est in rankings:
        med = est.median
        sums = [med[c].sum() for c in subsets]
        r = _pearson(perf, sums) if len(perf) > 1 else None
        out[est.method] = {"correlation": 0.0 if r is None else r, "degenerate": r is None, "n_subsets": len(perf)}
    return out
