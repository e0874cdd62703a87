"""Permutation feature importance corrected for covered information.

Each feature's mutual information with the target is split into the part
also carried by the other features (computed in closed form on a Gaussian
Markov random field) and the remainder; a fitted map then turns the
entropy aggregates back into importance units with the covered part
removed.
"""
from .config import ConfigError, RunConfig, build_config
from .data import (
    DataError,
    SubsampleSet,
    TabularDataset,
    discretize,
    generate_toy,
    load_csv,
    make_subsamples,
    quantile_gaussianize,
    save_csv,
    train_eval_split,
    trim_outliers,
)
from .entropy import EntropyProfile, covered_info, entropy_profile, local_mutual_info, oracle_covered_info
from .graph import PrecisionModel, fit_precision, graphical_lasso
from .importance import (
    CIDResult,
    ImportanceEstimate,
    PipelineError,
    cid_importance,
    fit_phi_learned,
    fit_phi_parametric,
    permutation_importance,
    subset_correlation_score,
    univariate_importance,
)
from .kernels import BACKEND
from .models import BayesianLinearRegressor, ExtremelyRandomizedTreesRegressor, fit_ert, gini_importance

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BayesianLinearRegressor",
    "CIDResult",
    "ConfigError",
    "DataError",
    "EntropyProfile",
    "ExtremelyRandomizedTreesRegressor",
    "ImportanceEstimate",
    "PipelineError",
    "PrecisionModel",
    "RunConfig",
    "SubsampleSet",
    "TabularDataset",
    "build_config",
    "cid_importance",
    "covered_info",
    "discretize",
    "entropy_profile",
    "fit_ert",
    "fit_phi_learned",
    "fit_phi_parametric",
    "fit_precision",
    "generate_toy",
    "gini_importance",
    "graphical_lasso",
    "load_csv",
    "local_mutual_info",
    "make_subsamples",
    "oracle_covered_info",
    "permutation_importance",
    "quantile_gaussianize",
    "save_csv",
    "subset_correlation_score",
    "train_eval_split",
    "trim_outliers",
    "univariate_importance",
]
