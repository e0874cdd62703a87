import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import kendalltau

from cid import models
from cid.data import generate_toy, make_subsamples, quantile_gaussianize, train_eval_split, trim_outliers
from cid.entropy import EntropyProfile
from cid.importance import (
    DEFAULT_INV_C_GRID,
    ImportanceEstimate,
    ParametricPhi,
    PipelineError,
    cid_importance,
    fit_phi_learned,
    fit_phi_parametric,
    permutation_importance,
    read_importances_csv,
    subset_correlation_score,
    univariate_importance,
    write_importances_csv,
)
from cid.models import BayesianLinearRegressor, ExtremelyRandomizedTreesRegressor, fit_ert

from conftest import make_dataset


class Stump:
    """Predicts from the sign of column 0 only."""

    def predict(self, X):
        return np.where(np.asarray(X)[:, 0] > 0, 1.0, -1.0)


def _profile(H):
    """EntropyProfile holding only aggregates; ``H`` is features x subsamples x 4."""
    H = np.asarray(H, dtype=float)
    names = tuple(f"X{i + 1}" for i in range(H.shape[0]))
    empty = np.zeros((0, H.shape[0]))
    return EntropyProfile(names, empty, empty, H[..., 0], H[..., 1], H[..., 2], H[..., 3])


def _linear_problem(seed, n=1000, weights=(3.0, 2.0, 1.0, 0.0), noise=0.3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, len(weights)))
    y = X @ np.asarray(weights) + noise * rng.normal(size=n)
    return make_dataset(X, y)


# -- permutation importance ---------------------------------------------------

def test_identity_permutation_gives_exact_zero(rng):
    data = make_dataset(rng.normal(size=(200, 3)), rng.normal(size=200))
    model = fit_ert(data.values, data.target, n_trees=10)
    subs = make_subsamples(200, 5, 0.5, seed=1)
    pi = permutation_importance(model, data, subs, n_permutations=3, permutation=lambda r, n: np.arange(n))
    assert np.all(pi.per_subsample == 0.0)


def test_unused_feature_has_no_importance(rng):
    X = rng.normal(size=(400, 3))
    data = make_dataset(X, np.sign(X[:, 0]) + 0.1 * rng.normal(size=400))
    pi = permutation_importance(Stump(), data, make_subsamples(400, 200, 0.5, seed=3))
    for i in (1, 2):
        e = pi.per_subsample[i]
        stderr = e.std(ddof=1) / np.sqrt(len(e))
        assert abs(e.mean()) <= 2 * stderr
    assert pi.median[0] > 0.5


def test_permutation_importance_shapes_and_loss_name(rng):
    data = make_dataset(rng.normal(size=(60, 2)), rng.normal(size=60))
    subs = make_subsamples(60, 4, 0.5, seed=0)
    pi = permutation_importance(Stump(), data, subs)
    assert pi.per_subsample.shape == (2, 4)
    with pytest.raises(ValueError, match="unknown loss"):
        permutation_importance(Stump(), data, subs, loss="hinge")


def test_duplicate_feature_is_undervalued():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(1200, 3))
    y = X[:, 0] + 0.5 * X[:, 1] + 0.1 * rng.normal(size=1200)
    tr, ev = train_eval_split(1200, 0.5, seed=0)
    subs = make_subsamples(len(ev), 30, 0.8, seed=0, pool=ev)

    single = make_dataset(X, y)
    m1 = fit_ert(X[tr], y[tr], n_trees=40, seed=0)
    e_single = permutation_importance(m1, single, subs).median[0]

    Xd = np.column_stack([X[:, 0], X[:, 0], X[:, 1:]])
    dup = make_dataset(Xd, y)
    m2 = fit_ert(Xd[tr], y[tr], n_trees=40, seed=0)
    e_dup = permutation_importance(m2, dup, subs).median[:2]
    assert np.all(e_dup < e_single)


def test_relabeling_columns_permutes_importances():
    data = _linear_problem(6, n=600)
    order = [2, 0, 3, 1]
    relabeled = make_dataset(data.values[:, order], data.target)
    subs = make_subsamples(600, 40, 0.8, seed=2)
    a = permutation_importance(BayesianLinearRegressor().fit(data.values, data.target), data, subs, 20, seed=0)
    b = permutation_importance(
        BayesianLinearRegressor().fit(relabeled.values, relabeled.target), relabeled, subs, 20, seed=1
    )
    np.testing.assert_allclose(b.mean, a.mean[order], rtol=0.05, atol=0.01)


# -- univariate -----------------------------------------------------------------

def test_univariate_perfect_correlation(rng):
    x = rng.normal(size=100)
    assert univariate_importance(make_dataset(x, x))[0] == pytest.approx(1.0)


def test_univariate_noise_is_small(rng):
    data = make_dataset(rng.normal(size=(10_000, 1)), rng.normal(size=10_000))
    assert univariate_importance(data)[0] < 0.05


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 100), st.floats(-50, 50), st.integers(0, 1000))
def test_univariate_affine_invariant(scale, shift, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=50)
    y = x + r.normal(size=50)
    a = univariate_importance(make_dataset(x, y))[0]
    b = univariate_importance(make_dataset(scale * x + shift, y))[0]
    assert a == pytest.approx(b, rel=1e-9)


def test_univariate_constant_feature_warns(rng):
    data = make_dataset(np.column_stack([np.ones(20), rng.normal(size=20)]), rng.normal(size=20))
    with pytest.warns(UserWarning, match="zero variance"):
        scores = univariate_importance(data)
    assert scores[0] == 0.0


# -- estimate containers ----------------------------------------------------

def test_estimate_aggregates_and_csv_round_trip(tmp_path, rng):
    est = ImportanceEstimate("pi", ("a", "b", "c"), rng.normal(size=(3, 7)))
    assert sorted(est.ranking) == [0, 1, 2]
    np.testing.assert_array_equal(est.ranking, np.argsort(-np.median(est.per_subsample, axis=1)))
    assert est.summary()["ranking"][0] == est.feature_names[est.ranking[0]]
    write_importances_csv([est], tmp_path / "imp.csv")
    (back,) = read_importances_csv(tmp_path / "imp.csv")
    np.testing.assert_array_equal(back.per_subsample, est.per_subsample)
    assert back.feature_names == est.feature_names


def test_estimate_rejects_mismatched_names():
    with pytest.raises(ValueError):
        ImportanceEstimate("pi", ("a",), np.zeros((2, 3)))


# -- learned map ----------------------------------------------------------------

def test_learned_phi_recovers_noiseless_weights(rng):
    H = rng.uniform(0, 1, size=(4, 12, 4))
    w, b = np.array([0.7, -1.3, 2.0, 0.4]), 0.25
    e = H @ w + b
    phi = fit_phi_learned(_profile(H), ImportanceEstimate("pi", ("a", "b", "c", "d"), e))
    np.testing.assert_allclose(phi.regressor.coef_, w, atol=1e-6)
    assert phi.regressor.intercept_ == pytest.approx(b, abs=1e-6)


def test_learned_phi_null_model_predicts_mean(rng):
    H = rng.uniform(0, 1, size=(5, 40, 4))
    e = rng.normal(2.0, 1.0, size=(5, 40))
    phi = fit_phi_learned(_profile(H), ImportanceEstimate("pi", tuple("abcde"), e))
    pred = phi.predict(H.reshape(-1, 4))
    assert np.abs(pred - e.mean()).max() < 0.2 * e.std()


def test_learned_phi_needs_eight_pairs(rng):
    H = rng.uniform(size=(2, 3, 4))
    with pytest.raises(ValueError, match="at least 8"):
        fit_phi_learned(_profile(H), ImportanceEstimate("pi", ("a", "b"), np.zeros((2, 3))))


def test_learned_phi_rejects_mismatched_pairs(rng):
    with pytest.raises(ValueError, match="different pairs"):
        fit_phi_learned(_profile(rng.uniform(size=(2, 6, 4))), ImportanceEstimate("pi", ("a", "b"), np.zeros((2, 5))))


def test_learned_correction_zeroes_only_redundant_coverage(rng):
    H = rng.uniform(size=(3, 10, 4))
    e = H @ np.array([-1.0, 0.5, 2.0, 0.1])
    phi = fit_phi_learned(_profile(H), ImportanceEstimate("pi", tuple("abc"), e))
    flat = H.reshape(-1, 4)
    np.testing.assert_allclose(phi.corrected(flat), phi.predict(flat) - phi.regressor.coef_[0] * flat[:, 0])


# -- parametric map ---------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(
    st.floats(-1e6, 1e6, allow_nan=False),
    st.floats(0, 10, allow_nan=False),
    st.floats(0, 10, allow_nan=False),
    st.floats(0, 10, allow_nan=False),
    st.sampled_from([1 / v for v in DEFAULT_INV_C_GRID]),
)
def test_parametric_identity_without_redundant_coverage(e, hcm, hmp, hmm, c):
    H = np.array([[0.0, hcm, hmp, hmm]])
    out = ParametricPhi(c).corrected(H, np.array([e]))
    assert out[0] == e


def test_parametric_half_coverage_doubles():
    H = np.array([[0.3, 0.0, 0.6, 0.0], [1.0, 0.2, 2.0, 0.1]])
    e = np.array([0.8, -1.5])
    np.testing.assert_allclose(ParametricPhi(1.0).corrected(H, e), 2 * e)


def test_parametric_cap_warns():
    H = np.array([[0.6, 0.0, 0.6, 0.0], [0.9, 0.0, 0.6, 0.0]])
    with pytest.warns(UserWarning, match="capped"):
        out = ParametricPhi(1.0, max_gain=10.0).corrected(H, np.array([1.0, 2.0]))
    np.testing.assert_allclose(out, [10.0, 20.0])


def test_parametric_predict_inverts_correction(rng):
    H = np.column_stack([rng.uniform(0, 0.4, 20), rng.uniform(size=20), rng.uniform(0.5, 1, 20), rng.uniform(size=20)])
    e = rng.normal(size=20)
    phi = ParametricPhi(1 / 1.6)
    np.testing.assert_allclose(phi.predict(H, phi.corrected(H, e)), e)


def test_parametric_fit_uses_default_grid(rng):
    H = np.stack(
        [rng.uniform(0, 0.2, (3, 30)), rng.uniform(0, 1, (3, 30)), rng.uniform(0.5, 1, (3, 30)), rng.uniform(0, 1, (3, 30))],
        axis=-1,
    )
    true_c = 1 / 1.8
    total = 2.0 * H[..., 2]
    e = ParametricPhi(true_c).predict(H.reshape(-1, 4), total.reshape(-1)).reshape(3, 30)
    phi = fit_phi_parametric(_profile(H), ImportanceEstimate("pi", tuple("abc"), e))
    assert sorted(phi.cv_errors) == sorted(1 / v for v in DEFAULT_INV_C_GRID)
    assert phi.c == pytest.approx(true_c)


def test_parametric_fit_excludes_zero_mutual_information(rng):
    H = rng.uniform(0.1, 1, size=(2, 10, 4))
    H[0, :3, 2] = 0.0
    with pytest.warns(UserWarning, match="excluded"):
        fit_phi_parametric(_profile(H), ImportanceEstimate("pi", ("a", "b"), rng.normal(size=(2, 10))))


# -- end to end ---------------------------------------------------------------

def _run_linear(seed, phi_mode="learned", loss="mse", precision=None):
    data = _linear_problem(seed)
    tr, ev = train_eval_split(data.n_rows, 0.5, seed)
    model = fit_ert(data.values[tr], data.target[tr], n_trees=30, seed=seed)
    subs = make_subsamples(len(ev), 60, 0.8, seed, pool=ev)
    return cid_importance(data, model, subs, precision=precision, phi_mode=phi_mode, loss=loss, seed=seed)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_independent_features_keep_permutation_ranking(seed):
    res = _run_linear(seed)
    tau = kendalltau(res.estimate.median, res.permutation.median)[0]
    assert tau == pytest.approx(1.0)
    spread = np.ptp(res.permutation.median)
    assert np.median(np.abs(res.estimate.median - res.permutation.median)) < 0.25 * spread


def test_loss_scaling_scales_cid_linearly(monkeypatch):
    monkeypatch.setitem(models.LOSSES, "mse_x10", lambda a, b: 10.0 * models.mse(a, b))
    base = _run_linear(3)
    scaled = _run_linear(3, loss="mse_x10", precision=base.precision)
    np.testing.assert_array_equal(scaled.estimate.ranking, base.estimate.ranking)
    np.testing.assert_allclose(scaled.permutation.per_subsample, 10 * base.permutation.per_subsample, rtol=1e-12)
    np.testing.assert_allclose(scaled.estimate.per_subsample, 10 * base.estimate.per_subsample, rtol=1e-6, atol=1e-9)


def test_cid_result_contents():
    res = _run_linear(0, phi_mode="parametric")
    assert res.estimate.per_subsample.shape == res.permutation.per_subsample.shape == (4, 60)
    assert set(res.timings) == {"permutation", "graph", "entropy", "phi"}
    assert res.phi.c in [1 / v for v in DEFAULT_INV_C_GRID]


def test_cid_rejects_unknown_phi_mode(rng):
    data = make_dataset(rng.normal(size=(50, 2)), rng.normal(size=50))
    with pytest.raises(ValueError, match="phi mode"):
        cid_importance(data, Stump(), make_subsamples(50, 3, 0.5), phi_mode="spline")


def test_cid_failure_names_stage(rng):
    data = make_dataset(rng.normal(size=(50, 2)), rng.normal(size=50))
    subs = make_subsamples(50, 2, 0.5, seed=0)
    with pytest.raises(PipelineError) as info:
        cid_importance(data, Stump(), subs, phi_mode="learned")
    assert info.value.stage == "phi"


def test_toy_learned_map_explains_permutation_importance():
    data = quantile_gaussianize(trim_outliers(generate_toy(800, seed=0), 4.0)[0])
    tr, ev = train_eval_split(data.n_rows, 0.5, 0)
    model = fit_ert(data.values[tr], data.target[tr], n_trees=30)
    res = cid_importance(data, model, make_subsamples(len(ev), 40, 0.8, 0, pool=ev))
    H = res.profile.pooled()
    e = res.permutation.per_subsample.reshape(-1)
    resid = e - res.phi.predict(H)
    assert 1 - resid.var() / e.var() > 0


# -- subset correlation -----------------------------------------------------

def test_oracle_ranking_beats_random():
    data = _linear_problem(0, n=800, weights=(3.0, 2.0, 1.5, 1.0, 0.5, 0.0))
    truth = np.array([3.0, 2.0, 1.5, 1.0, 0.5, 0.0]) ** 2
    names = data.feature_names
    oracle = ImportanceEstimate("oracle", names, np.tile(truth[:, None], 3))
    scrambled = ImportanceEstimate("random", names, np.tile(np.random.default_rng(1).permutation(truth)[:, None], 3))
    scores = subset_correlation_score(
        data, lambda: ExtremelyRandomizedTreesRegressor(n_trees=20), [oracle, scrambled], n_subsets=40, subset_size=3
    )
    assert scores["oracle"]["correlation"] > scores["random"]["correlation"]
    assert scores["oracle"]["correlation"] > 0.8
    assert scores["oracle"]["n_subsets"] == 40


def test_equal_importances_are_degenerate(rng):
    data = make_dataset(rng.normal(size=(100, 4)), rng.normal(size=100))
    flat = ImportanceEstimate("flat", data.feature_names, np.ones((4, 3)))
    other = ImportanceEstimate("other", data.feature_names, rng.uniform(size=(4, 3)))
    scores = subset_correlation_score(data, lambda: BayesianLinearRegressor(), [flat, other], n_subsets=10, subset_size=2)
    assert scores["flat"] == {"correlation": 0.0, "degenerate": True, "n_subsets": 10}
    assert not scores["other"]["degenerate"]


def test_subset_correlation_skips_failing_subsets(rng):
    data = make_dataset(rng.normal(size=(60, 3)), rng.normal(size=60))

    class Fragile:
        def fit(self, X, y):
            if X.shape[1] and np.allclose(X[:, 0], data.values[: len(X), 0]):
                raise RuntimeError("boom")
            return BayesianLinearRegressor().fit(X, y)

    ests = [ImportanceEstimate(m, data.feature_names, rng.uniform(size=(3, 2))) for m in ("a", "b")]
    train = np.arange(30)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        scores = subset_correlation_score(
            data, Fragile, ests, n_subsets=12, subset_size=1, train_rows=train, eval_rows=np.arange(30, 60)
        )
    assert scores["a"]["n_subsets"] < 12
    assert any("skipped" in str(w.message) for w in caught)


def test_subset_correlation_validates_arguments(rng):
    data = make_dataset(rng.normal(size=(30, 3)), rng.normal(size=30))
    est = ImportanceEstimate("a", data.feature_names, np.ones((3, 2)))
    with pytest.raises(ValueError, match="two methods"):
        subset_correlation_score(data, BayesianLinearRegressor, [est])
    with pytest.raises(ValueError, match="subset_size"):
        subset_correlation_score(data, BayesianLinearRegressor, [est, est], subset_size=3)
