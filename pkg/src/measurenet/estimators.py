"""Fixed (non-learned) set estimators and the moment-feature linear baseline."""

import warnings

import numpy as np
from scipy.stats import chi2
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from .exceptions import DomainError, UsageError
from .validation import check_sets, check_targets


def _points(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise UsageError("expected a non-empty (N, d) array of points")
    return x


def sample_mean(points):
    return _points(points).mean(axis=0)


def fermat_objective(y, points):
    """Sum of Euclidean distances from ``y`` to the points."""
    return float(np.linalg.norm(_points(points) - y, axis=1).sum())


def geometric_median(points, tol=1e-9, max_iter=10_000, return_info=False):
    """Geometric median by Weiszfeld iterations started at the sample mean.

    When an iterate lands on a data point (within 1e-12) the Vardi-Zhang
    correction is applied: the point is optimal if the pull of the other
    points has norm <= its multiplicity, otherwise we step off it along the
    pull. Stops when the step is shorter than ``tol``.

    With ``return_info`` also returns a dict with ``converged``, ``n_iter``
    and the ``objective`` trace.
    """
    x = _points(points)
    y = x.mean(axis=0)
    trace = [fermat_objective(y, x)]
    converged = False
    best, best_obj = y, trace[0]
    it = 0
    for it in range(1, max_iter + 1):
        diff = x - y
        dist = np.linalg.norm(diff, axis=1)
        on = dist < 1e-12
        w = 1.0 / np.where(on, 1.0, dist)
        w[on] = 0.0
        if w.sum() == 0.0:  # every point coincides with y
            converged = True
            break
        t = (w[:, None] * x).sum(axis=0) / w.sum()
        eta = int(on.sum())
        if eta:
            pull = (w[:, None] * diff).sum(axis=0)
            r = np.linalg.norm(pull)
            if r <= eta:
                converged = True
                break
            step = eta / r
            y_new = (1.0 - step) * t + step * y
        else:
            y_new = t
        move = np.linalg.norm(y_new - y)
        y = y_new
        obj = fermat_objective(y, x)
        trace.append(obj)
        if obj <= best_obj:
            best, best_obj = y, obj
        if move < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"Weiszfeld did not converge in {max_iter} iterations", ConvergenceWarning)
        y = best
    if return_info:
        return y, {"converged": converged, "n_iter": it, "objective": np.array(trace)}
    return y


def top_eigenpair(cov, tol=1e-8, max_iter=10_000, seed=0):
    """Largest eigenvalue/eigenvector of a symmetric PSD matrix by power iteration.

    Returns ``(value, vector, converged)``.
    """
    d = cov.shape[0]
    if d == 1:
        return float(cov[0, 0]), np.ones(1), True
    v = np.random.default_rng(seed).standard_normal(d)
    v /= np.linalg.norm(v)
    lam = float(v @ cov @ v)
    for _ in range(max_iter):
        w = cov @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0, v, True
        v = w / nrm
        new = float(v @ cov @ v)
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            return new, v, True
        lam = new
    return lam, v, False


def spherical_scale(points):
    """Robust per-coordinate variance: median squared distance to the
    coordinate-wise median, divided by the chi-square(d) median."""
    d = points.shape[1]
    med = np.median(points, axis=0)
    sq = ((points - med) ** 2).sum(axis=1)
    return float(np.median(sq) / chi2.median(d))


def filter_mean(points, tau=0.1, cher=1.5, max_iter=100):
    """Iterative spectral filter for robust mean estimation.

    Each round compares the top eigenvalue of the surviving points'
    covariance with ``cher`` times a robust spherical variance. If it is
    not larger, the surviving mean is returned. Otherwise points are scored
    by their squared projection on the top eigenvector (about the median
    projection); those whose score exceeds ``cher * scale`` times the
    chi-square(1) upper-``tau`` quantile are discarded, or the worst point
    (all tied worst points) when none does. A round that would leave fewer
    than half of the original points stops the filter instead.
    """
    if not 0.0 < tau < 1.0:
        raise UsageError("tau must lie in (0, 1)")
    x = _points(points)
    cutoff = chi2.ppf(1.0 - tau, 1)
    min_keep = (len(x) + 1) // 2  # never discard a majority of the sample
    for _ in range(max_iter):
        mu = x.mean(axis=0)
        if len(x) < 2:
            return mu
        cov = np.cov(x, rowvar=False, bias=True).reshape(x.shape[1], x.shape[1])
        lam, v, ok = top_eigenpair(cov)
        if not ok:
            warnings.warn("power iteration did not converge; returning current mean",
                          ConvergenceWarning)
            return mu
        scale = spherical_scale(x)
        if lam <= cher * scale:
            return mu
        proj = x @ v
        score = (proj - np.median(proj)) ** 2
        drop = score > cher * scale * cutoff
        if not drop.any():
            drop = score == score.max()  # ties are dropped together to stay order-free
        if len(x) - drop.sum() < min_keep:
            return mu
        x = x[~drop]
        if len(x) == 0:
            raise DomainError("filter removed every point")
    return x.mean(axis=0)


ESTIMATORS = {
    "mean": sample_mean,
    "geomedian": geometric_median,
    "filter": filter_mean,
}


def moment_features(values, order):
    """``[1, mean(v), mean(v^2), ..., mean(v^order)]`` for one set of scalars."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise UsageError("empty set")
    return np.array([1.0] + [np.mean(v ** k) for k in range(1, order + 1)])


def _inverse_norm(points):
    norms = np.linalg.norm(points, axis=1)
    if np.any(norms == 0):
        raise DomainError("inverse norm undefined at the origin")
    return 1.0 / norms


class MomentRegressor(RegressorMixin, BaseEstimator):
    """Linear regression on normalized power-sum (moment) features.

    Parameters
    ----------
    order : int
        Highest moment K used as a feature.
    ridge : float
        Ridge penalty on the non-intercept coefficients.
    point_map : {None, "inv_norm"}
        Per-point map turning d-dimensional points into scalars. ``None``
        expects 1-D points.
    """

    def __init__(self, order=4, ridge=0.0, point_map=None):
        self.order = order
        self.ridge = ridge
        self.point_map = point_map

    def _values(self, s):
        if self.point_map == "inv_norm":
            return _inverse_norm(s)
        if self.point_map is not None:
            raise UsageError(f"unknown point_map {self.point_map!r}")
        if s.shape[1] != 1:
            raise UsageError("moment features need scalar points; set point_map='inv_norm'")
        return s[:, 0]

    def features(self, X):
        batch = check_sets(X)
        return np.array([moment_features(self._values(s), self.order) for s in batch])

    def fit(self, X, y):
        if self.order < 0 or self.ridge < 0:
            raise UsageError("order and ridge must be non-negative")
        F = self.features(X)
        y = check_targets(y, len(F)).ravel()
        gram = F.T @ F
        pen = self.ridge * np.eye(F.shape[1])
        pen[0, 0] = 0.0
        A = gram + pen
        if self.ridge == 0.0 and np.linalg.matrix_rank(A) < A.shape[0]:
            raise np.linalg.LinAlgError("singular normal equations; use ridge > 0")
        self.coef_ = np.linalg.solve(A, F.T @ y)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self.features(X) @ self.coef_
