"""End-to-end ranking and evaluation runs driven by a :class:`RunConfig`."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .data import (
    TabularDataset,
    discretize,
    generate_toy,
    load_csv,
    make_subsamples,
    quantile_gaussianize,
    train_eval_split,
    trim_outliers,
)
from .graph import read_edge_list
from .importance import (
    CIDResult,
    ImportanceEstimate,
    PipelineError,
    _stage,
    cid_importance,
    permutation_importance,
    subset_correlation_score,
    univariate_estimate,
)
from .models import ExtremelyRandomizedTreesRegressor, gini_importance

logger = logging.getLogger(__name__)

METHODS = ("permutation", "cid", "gini", "univariate")


@dataclass
class RankResult:
    estimates: dict[str, ImportanceEstimate]
    cid: CIDResult | None
    data: TabularDataset
    entropy_data: TabularDataset
    train_rows: np.ndarray
    eval_rows: np.ndarray
    removed: int
    cycle_times: dict[str, float] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)


def load_data(cfg: RunConfig) -> TabularDataset:
    with _stage("load"):
        if cfg.input is not None:
            return load_csv(cfg.input, target_column=cfg.target)
        return generate_toy(cfg.toy_samples, seed=cfg.seed)


def preprocess(data: TabularDataset, cfg: RunConfig) -> tuple[TabularDataset, TabularDataset, int]:
    """Trim, optionally Gaussianize, then bin.

    Returns the model-facing data, the binned data used for the entropy
    terms (same rows) and the number of trimmed rows.
    """
    with _stage("preprocess"):
        trimmed, removed = trim_outliers(data, cfg.k_sigma)
        model_data = quantile_gaussianize(trimmed) if cfg.gaussianize else trimmed
        entropy_data = discretize(model_data if cfg.gaussianize else quantile_gaussianize(trimmed), cfg.bins)
    return model_data, entropy_data, removed


def _model_factory(cfg: RunConfig):
    return lambda: ExtremelyRandomizedTreesRegressor(n_trees=cfg.n_trees, seed=cfg.seed)


def rank(cfg: RunConfig, data: TabularDataset | None = None) -> RankResult:
    """Permutation, CID, Gini and univariate importances on held-out subsamples.

    The model is fit once on a training split; all subsamples are drawn from
    the complementary evaluation rows.  Gini importance has no per
    subsample variation under this protocol and is repeated across columns.
    """
    if data is None:
        data = load_data(cfg)
    model_data, entropy_data, removed = preprocess(data, cfg)
    timings: dict[str, float] = {}
    with _stage("split"):
        train_rows, eval_rows = train_eval_split(model_data.n_rows, cfg.train_fraction, cfg.seed)
        subsamples = make_subsamples(len(eval_rows), cfg.subsamples, cfg.fraction, cfg.seed, pool=eval_rows)
    with _stage("model", timings):
        model = _model_factory(cfg)().fit(model_data.values[train_rows], model_data.target[train_rows])
    fit_time = timings["model"]

    pi_times: list[float] = []
    with _stage("permutation", timings):
        pi = permutation_importance(
            model, model_data, subsamples, cfg.permutations, seed=cfg.seed, timings=pi_times
        )
    prior_edges = None
    if cfg.prior_graph is not None:
        with _stage("graph"):
            prior_edges = read_edge_list(cfg.prior_graph, model_data.n_features)
    cid = cid_importance(
        model_data,
        model,
        subsamples,
        phi_mode=cfg.phi,
        pi=pi,
        entropy_data=entropy_data,
        seed=cfg.seed,
        rho=cfg.rho,
        rho_grid=cfg.rho_grid,
        prior_edges=prior_edges,
        c_grid=cfg.c_grid,
        backend=cfg.backend,
    )
    for k, v in cid.timings.items():
        if k != "permutation":
            timings[k] = v
    with _stage("baselines", timings):
        t0 = time.perf_counter()
        gini = gini_importance(model)
        gini_time = time.perf_counter() - t0
        gini_est = ImportanceEstimate("gini", model_data.feature_names, np.repeat(gini[:, None], len(subsamples), 1))
        uni_times: list[float] = []
        uni = univariate_estimate(model_data, subsamples, uni_times)

    S = len(subsamples)
    pi_cycle = float(np.mean(pi_times))
    extra = sum(cid.timings.get(k, 0.0) for k in ("graph", "entropy", "phi"))
    cycle_times = {
        "permutation": pi_cycle,
        "cid": pi_cycle + extra / S,
        "gini": fit_time + gini_time,
        "univariate": float(np.mean(uni_times)),
    }
    estimates = {"permutation": pi, "cid": cid.estimate, "gini": gini_est, "univariate": uni}
    return RankResult(estimates, cid, model_data, entropy_data, train_rows, eval_rows, removed, cycle_times, timings)


def restore(cfg: RunConfig, estimates: dict[str, ImportanceEstimate], cycle_times: dict[str, float]) -> RankResult:
    """Rebuild a ranking run from saved estimates; data and split are recomputed."""
    data = load_data(cfg)
    model_data, entropy_data, removed = preprocess(data, cfg)
    missing = [m for m in METHODS if m not in estimates]
    if missing:
        raise PipelineError("evaluate", f"saved importances lack methods {missing}")
    if tuple(estimates["cid"].feature_names) != model_data.feature_names:
        raise PipelineError("evaluate", "saved importances do not match the input features")
    train_rows, eval_rows = train_eval_split(model_data.n_rows, cfg.train_fraction, cfg.seed)
    return RankResult(dict(estimates), None, model_data, entropy_data, train_rows, eval_rows, removed, dict(cycle_times))


def evaluate(cfg: RunConfig, result: RankResult) -> dict[str, dict]:
    """Subset-correlation score per method, with per-cycle timings attached."""
    with _stage("evaluate"):
        scores = subset_correlation_score(
            result.data,
            _model_factory(cfg),
            [result.estimates[m] for m in METHODS],
            n_subsets=cfg.eval_subsets,
            subset_size=cfg.subset_size,
            seed=cfg.seed,
            train_rows=result.train_rows,
            eval_rows=result.eval_rows,
        )
    for method, row in scores.items():
        row["cycle_time_s"] = result.cycle_times[method]
    return scores


__all__ = ["METHODS", "PipelineError", "RankResult", "evaluate", "load_data", "preprocess", "rank", "restore"]
