import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from cid.data import (
    DataError,
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
from conftest import make_dataset


def test_load_csv_basic(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    d = load_csv(p, "y")
    assert (d.n_rows, d.n_features) == (3, 2)
    assert d.feature_names == ("a", "b")
    np.testing.assert_array_equal(d.target, [3, 6, 9])
    assert not d.is_discretized


def test_load_csv_target_in_middle_keeps_feature_order(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y,b\n1,2,3\n")
    d = load_csv(p, "y")
    assert d.feature_names == ("a", "b")
    np.testing.assert_array_equal(d.values, [[1, 3]])


def test_load_csv_blank_cell_names_location(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,y\n1,2,3\n4,,6\n")
    with pytest.raises(DataError, match=r"row 3, column 'b'"):
        load_csv(p, "y")


def test_load_csv_errors(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "missing.csv")
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="target column"):
        load_csv(p, "y")
    p.write_text("a,y\nx,2\n")
    with pytest.raises(DataError, match="cannot parse"):
        load_csv(p, "y")


def test_load_csv_delimiter(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a;y\n1.5;2\n")
    assert load_csv(p, "y", delimiter=";").values[0, 0] == 1.5


def test_toy_round_trip_six_decimals(tmp_path):
    d = generate_toy(200, seed=3)
    p = tmp_path / "toy.csv"
    save_csv(d, p)
    back = load_csv(p, "y")
    assert back.feature_names == d.feature_names
    np.testing.assert_allclose(back.values, np.round(d.values, 6), atol=5e-7, rtol=0)
    np.testing.assert_allclose(back.target, np.round(d.target, 6), atol=5e-7, rtol=0)
    save_csv(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_text() == p.read_text()


def test_gaussianize_rank_formula():
    d = quantile_gaussianize(make_dataset([1.0, 2.0, 3.0], [0.0, 1.0, 2.0]))
    np.testing.assert_allclose(d.values[:, 0], [-0.9674216, 0.0, 0.9674216], atol=1e-6)
    assert d.values[1, 0] == 0.0


def test_gaussianize_constant_column_passthrough(caplog):
    d = make_dataset(np.column_stack([np.full(12, 7.0), np.arange(12.0)]), np.arange(12.0))
    out = quantile_gaussianize(d)
    np.testing.assert_array_equal(out.values[:, 0], 7.0)
    assert "constant" in caplog.text


def test_gaussianize_gamma_sample_is_symmetric(rng):
    x = rng.gamma(2.0, 2.0, size=800)
    out = quantile_gaussianize(make_dataset(x, x))
    assert abs(stats.skew(out.values[:, 0])) < 0.1
    assert abs(stats.skew(x)) > 0.5


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(10, 60), elements=st.floats(-1e6, 1e6), unique=True))
def test_gaussianize_strictly_monotone(x):
    out = quantile_gaussianize(make_dataset(x, x)).values[:, 0]
    order = np.argsort(x)
    assert np.all(np.diff(out[order]) > 0)


def test_trim_default_and_clean_data(rng):
    d = make_dataset(rng.normal(size=(100, 3)) * 0.5, rng.normal(size=100))
    out, removed = trim_outliers(d)
    assert removed == 0 and out.n_rows == 100


def test_trim_removes_single_extreme_row(rng):
    X = rng.normal(size=(100, 3))
    X = (X - X.mean(0)) / X.std(0)
    X = np.clip(X, -2.5, 2.5)
    X[17, 1] = 10 * X[:, 1].std() + X[:, 1].mean() + 10
    d = make_dataset(X, np.zeros(100))
    out, removed = trim_outliers(d, 4.0)
    assert removed == 1
    assert 17 not in [i for i in range(100) if np.any(np.all(out.values == X[i], axis=1))]


def test_trim_idempotent_at_fixed_thresholds(rng):
    X = rng.standard_t(2, size=(300, 2))
    d = make_dataset(X, np.zeros(300))
    mean, std = X.mean(0), X.std(0)
    once, _ = trim_outliers(d, 3.0)
    # same thresholds (from the original data) applied again remove nothing
    z = np.abs(once.values - mean) / std
    assert np.all(z <= 3.0)


def test_trim_errors():
    d = make_dataset([0.0, 1.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        trim_outliers(d, 0.0)
    with pytest.raises(DataError, match="every row"):
        trim_outliers(d, 1e-9)


def test_discretize_uniform_populations(rng):
    M = 5000
    d = discretize(make_dataset(rng.uniform(size=M), rng.uniform(size=M)), 10)
    counts = np.bincount(d.bin_index(0), minlength=10)
    assert np.all(np.abs(counts - M / 10) <= 3 * np.sqrt(M / 10))
    widths = np.diff(d.edges(0))
    np.testing.assert_allclose(widths, widths[0])
    assert d.edges(0)[0] == d.values[:, 0].min() and d.edges(0)[-1] == d.values[:, 0].max()


def test_discretize_constant_feature_single_bin():
    d = discretize(make_dataset(np.full(20, 3.0), np.arange(20.0)), 10)
    assert len(np.unique(d.bin_index(0))) == 1


def test_discretize_rejects_one_bin():
    with pytest.raises(ValueError):
        discretize(make_dataset([1.0, 2.0], [1.0, 2.0]), 1)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, st.integers(2, 50), elements=st.floats(-100, 100)),
    st.integers(2, 20),
)
def test_midpoint_snap_within_half_bin(x, bins):
    d = discretize(make_dataset(x, x), bins)
    mids = d.midpoints(0)[d.bin_index(0)]
    half = 0.5 * np.diff(d.edges(0))[0]
    assert np.all(np.abs(mids - x) <= half * (1 + 1e-9) + 1e-12)


def test_subsamples_shape_and_determinism():
    a = make_subsamples(100, 200, 0.8, seed=4)
    b = make_subsamples(100, 200, 0.8, seed=4)
    assert a.count == 200
    for s, t in zip(a, b):
        assert len(s) == 80 and len(np.unique(s)) == 80
        assert s.min() >= 0 and s.max() < 100
        np.testing.assert_array_equal(s, t)


def test_subsamples_full_fraction_is_permutation():
    for s in make_subsamples(30, 5, 1.0, seed=0):
        np.testing.assert_array_equal(np.sort(s), np.arange(30))


def test_subsamples_pool_and_errors():
    pool = np.array([5, 9, 11, 20])
    for s in make_subsamples(4, 3, 0.5, seed=1, pool=pool):
        assert set(s) <= set(pool)
    with pytest.raises(ValueError):
        make_subsamples(3, 2, 0.5)
    with pytest.raises(ValueError):
        make_subsamples(10, 2, 0.0)


def test_train_eval_split_partitions():
    tr, ev = train_eval_split(11, 0.5, seed=2)
    assert sorted(np.concatenate([tr, ev]).tolist()) == list(range(11))


def test_toy_structure():
    d = generate_toy(seed=1)
    assert d.n_rows == 800 and d.feature_names == ("X1", "X2", "X3", "X4", "X5", "X6")
    X = d.values
    np.testing.assert_array_equal(X[:, 2], X[:, 0] * X[:, 1])
    np.testing.assert_array_equal(X[:, 4], np.sin(X[:, 3]))
    assert np.all(X[:, 3] <= 0) and np.all((X[:, 1] >= 0) & (X[:, 1] <= 1))
    again = generate_toy(seed=1)
    np.testing.assert_array_equal(again.values, X)
    np.testing.assert_array_equal(again.target, d.target)


def test_toy_branch_frequencies():
    d = generate_toy(200_000, seed=0)
    X, y = d.values, d.target
    # y == X3 only on its own branch (ties with other branches have probability 0)
    assert abs(np.mean(y == X[:, 2]) - 0.20) < 0.005
    assert abs(np.mean(y == X[:, 5]) - 0.05) < 0.003
    assert abs(X[:, 3].mean() + 5.0) < 0.05


def test_bin_codes_follow_row_subsets(rng):
    data = discretize(TabularDataset(rng.normal(size=(40, 2)), rng.normal(size=40), ("a", "b")), 5)
    rows = rng.permutation(40)[:15]
    sub = data.subset_rows(rows)
    for col in range(3):
        np.testing.assert_array_equal(sub.bin_index(col), data.bin_index(col)[rows])
    dropped = data.drop_features([0])
    np.testing.assert_array_equal(dropped.bin_index(0), data.bin_index(1))
    np.testing.assert_array_equal(dropped.bin_index(1), data.bin_index(2))
    with pytest.raises(IndexError):
        data.bin_index(3)
