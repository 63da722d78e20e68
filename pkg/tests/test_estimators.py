import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.exceptions import ConvergenceWarning

from measurenet.exceptions import DomainError, UsageError
from measurenet.estimators import (MomentRegressor, fermat_objective, filter_mean, geometric_median,
                                   moment_features, sample_mean, top_eigenpair)

CROSS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def test_sample_mean_examples():
    x = np.array([[1.0, 2.0]])
    assert np.array_equal(sample_mean(x), [1.0, 2.0])
    v = np.array([3.0, -1.5])
    assert np.array_equal(sample_mean(np.stack([v, -v])), [0.0, 0.0])
    with pytest.raises(UsageError):
        sample_mean(np.zeros((0, 2)))


def test_geometric_median_examples():
    assert np.abs(geometric_median(CROSS)).max() < 1e-9
    assert abs(geometric_median([0.0, 0.0, 10.0])[0]) < 1e-9
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=(5, 2))
        y = geometric_median(x)
        assert fermat_objective(y, x) <= fermat_objective(x.mean(axis=0), x) + 1e-12


def test_geometric_median_matches_optimizer():
    from scipy.optimize import minimize

    x = np.random.default_rng(1).normal(size=(9, 3))
    ref = minimize(lambda y: fermat_objective(y, x), x.mean(axis=0), method="Nelder-Mead",
                   options=dict(xatol=1e-12, fatol=1e-14, maxiter=20000)).x
    assert np.allclose(geometric_median(x), ref, atol=1e-5)


@given(st.integers(0, 2**31))
def test_weiszfeld_monotone(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(int(rng.integers(2, 12)), int(rng.integers(1, 5))))
    _, info = geometric_median(x, return_info=True)
    obj = info["objective"]
    assert np.all(np.diff(obj) <= 1e-12 * obj[0])


def test_weiszfeld_hits_data_point():
    # the mean of these points is a data point, and that point is the median
    x = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    y, info = geometric_median(x, return_info=True)
    assert np.array_equal(y, [0.0, 0.0]) and info["converged"]
    # starting on a non-optimal data point: the correction steps off it
    x = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 0.1], [3.0, -0.1], [-3.0, 0.0]])
    y = geometric_median(x)
    assert fermat_objective(y, x) < fermat_objective(np.zeros(2), x)


def test_weiszfeld_nonconvergence_warns():
    x = np.random.default_rng(2).normal(size=(10, 3))
    with pytest.warns(ConvergenceWarning):
        y, info = geometric_median(x, tol=0.0, max_iter=3, return_info=True)
    assert not info["converged"]
    assert fermat_objective(y, x) == pytest.approx(info["objective"].min())


@given(st.integers(0, 2**31), st.integers(2, 3))
def test_estimators_duplication(seed, k):
    x = np.random.default_rng(seed).normal(size=(7, 3))
    xx = np.concatenate([x] * k)
    assert np.array_equal(sample_mean(x), sample_mean(xx)) or np.allclose(sample_mean(x), sample_mean(xx), atol=1e-15)
    assert np.allclose(geometric_median(x), geometric_median(xx), atol=1e-8)
    perm = np.random.default_rng(seed + 1).permutation(len(x))
    assert np.allclose(geometric_median(x), geometric_median(x[perm]), atol=1e-8)
    assert np.allclose(filter_mean(x), filter_mean(x[perm]), atol=1e-8)


def test_filter_single_outlier():
    x = np.array([0.0, 0.1, -0.1, 10.0])
    est = filter_mean(x)
    assert abs(est[0]) < 0.05
    # brute force: the best mean over subsets that drop points is the one without the outlier
    best = min((np.mean(np.delete(x, list(s))) for r in range(0, 2)
                for s in itertools.combinations(range(4), r)), key=abs)
    assert est[0] == pytest.approx(best)


def test_filter_clean_data_is_mean():
    x = np.random.default_rng(4).normal(size=(5000, 5))
    assert np.array_equal(filter_mean(x), x.mean(axis=0))


def test_filter_removes_cluster():
    rng = np.random.default_rng(5)
    x = np.vstack([rng.normal(size=(400, 3)), rng.normal(size=(40, 3)) + [12.0, 0.0, 0.0]])
    assert np.abs(filter_mean(x)).max() < 0.2
    assert np.abs(x.mean(axis=0)).max() > 0.8


def test_filter_errors():
    with pytest.raises(UsageError):
        filter_mean(CROSS, tau=0.0)


def test_top_eigenpair():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(6, 6))
    cov = a @ a.T
    lam, v, ok = top_eigenpair(cov)
    w, V = np.linalg.eigh(cov)
    assert ok and lam == pytest.approx(w[-1], rel=1e-7)
    assert abs(abs(v @ V[:, -1]) - 1) < 1e-6


def test_moment_features():
    assert np.array_equal(moment_features([2.0], 2), [1.0, 2.0, 4.0])
    v = np.array([0.5, 1.5, -2.0])
    assert np.array_equal(moment_features(v, 3), moment_features(np.tile(v, 4), 3)) or \
        np.allclose(moment_features(v, 3), moment_features(np.tile(v, 4), 3), rtol=0, atol=1e-15)


def test_moment_regressor_mean_target():
    rng = np.random.default_rng(7)
    train = rng.uniform(-3, 3, size=(200, 4, 1))
    reg = MomentRegressor(order=3).fit(train, train.mean(axis=(1, 2)))
    assert np.allclose(reg.coef_, [0, 1, 0, 0], atol=1e-10)
    for n in (8, 64):
        test = rng.uniform(-3, 3, size=(100, n, 1))
        assert np.max(np.abs(reg.predict(test) - test.mean(axis=(1, 2)))) < 1e-10


def test_moment_regressor_constant_and_singular():
    rng = np.random.default_rng(8)
    X = rng.uniform(-1, 1, size=(30, 3, 1))
    reg = MomentRegressor(order=2, ridge=1e-3).fit(X, np.full(30, 2.5))
    assert reg.coef_[0] == pytest.approx(2.5) and np.allclose(reg.coef_[1:], 0, atol=1e-12)
    with pytest.raises(np.linalg.LinAlgError, match="ridge"):
        MomentRegressor(order=3).fit(np.ones((5, 2, 1)), np.ones(5))


def test_moment_regressor_inverse_norm_map():
    rng = np.random.default_rng(9)
    X = rng.uniform(-3, 3, size=(100, 4, 3))
    y = (1 / np.linalg.norm(X, axis=2)).mean(axis=1)
    reg = MomentRegressor(order=1, point_map="inv_norm").fit(X, y)
    assert np.allclose(reg.predict(X), y, atol=1e-10)
    with pytest.raises(UsageError):
        MomentRegressor().fit(X, y)
