"""Empirical probes of how set functions behave as functions of measures."""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import UsageError
from .numerics import make_rng
from .targets import eval_target, softmax_mean


def wasserstein1_1d(a, b):
    """Exact W1 distance between the empirical measures of two samples.

    Integrates ``|F_a^{-1}(u) - F_b^{-1}(u)|`` over u in [0, 1]; both quantile
    functions are piecewise constant with breaks at ``i/P`` and ``j/Q``.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    p, q = len(a), len(b)
    if p == 0 or q == 0:
        raise UsageError("both samples must be non-empty")
    if p == q:
        return float(np.abs(a - b).sum() / p)
    # breakpoints i*q and j*p on the integer grid [0, p*q] keep the merge exact
    cuts = np.union1d(np.arange(p + 1) * q, np.arange(q + 1) * p)
    widths = np.diff(cuts)
    mid = cuts[:-1]
    ia = mid // q
    ib = mid // p
    return float((widths * np.abs(a[ia] - b[ib])).sum() / (p * q))


@dataclass
class ContinuityReport:
    target: str
    pairs: int
    max_ratio: float
    quantiles: dict
    family: list  # (N, ratio) on the (delta_0, nu_N) family


def _as_points(values):
    return np.asarray(values, dtype=np.float64).reshape(-1, 1)


def lipschitz_ratio(spec, a, b):
    w = wasserstein1_1d(a, b)
    if w == 0.0:
        return None
    gap = abs(eval_target(spec, _as_points(a)) - eval_target(spec, _as_points(b)))
    return gap / w


def dirac_pair(n):
    """``delta_0`` (as the one-point set {0}) and ``nu_N`` = (N-1)/N delta_0 + 1/N delta_1."""
    nu = np.zeros(n)
    nu[-1] = 1.0
    return np.zeros(1), nu


def continuity_modulus(spec, sampler=None, n_pairs=200, sizes=(2, 4, 8, 16, 32), rng=0,
                       family=(2, 4, 8, 16)):
    """Ratios |f(mu) - f(nu)| / W1(mu, nu) over random and adversarial pairs.

    ``spec`` must act on 1-D values. ``sampler(rng, n)`` draws n values
    (default U[0, 1]); random pairs get independently chosen sizes.
    """
    rng = make_rng(rng)
    if sampler is None:
        sampler = (lambda g, n: g.random(n))
    ratios = []
    for _ in range(n_pairs):
        na, nb = rng.choice(sizes), rng.choice(sizes)
        r = lipschitz_ratio(spec, sampler(rng, na), sampler(rng, nb))
        if r is not None:
            ratios.append(r)
    fam = []
    for n in family:
        mu, nu = dirac_pair(n)
        r = lipschitz_ratio(spec, mu, nu)
        fam.append((n, r))
        ratios.append(r)
    ratios = np.asarray(ratios)
    q = {k: float(np.quantile(ratios, k)) for k in (0.5, 0.9, 0.99)}
    return ContinuityReport(spec.kind, len(ratios), float(ratios.max()), q, fam)


def replicate(points, k):
    """The duplication map: each point repeated k times."""
    if k < 1:
        raise UsageError("k must be >= 1")
    points = np.asarray(points, dtype=np.float64)
    return np.concatenate([points] * k, axis=0)


def duplication_check(spec, points, k):
    """|f_N(x) - f_kN(k copies of x)|."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    a = eval_target(spec, points)
    b = eval_target(spec, replicate(points, k))
    return float(np.max(np.abs(np.subtract(a, b))))


def softmax_bound_check(values, lam):
    """Gap between the normalized soft maximum and the maximum, against log(N)/lam."""
    if lam <= 0:
        raise UsageError("lam must be positive")
    values = np.asarray(values, dtype=np.float64).ravel()
    n = len(values)
    if n < 1:
        raise UsageError("need at least one value")
    top = values.max()
    gap = abs(top - softmax_mean(values, lam))
    bound = math.log(n) / lam
    # the bound is attained when one value dominates; allow for rounding in the subtraction
    slack = 8 * np.finfo(float).eps * max(1.0, abs(top), bound)
    return gap, bound, gap <= bound + slack


def empirical_concentration(sampler, n_grid=(8, 32, 128, 512), trials=50, rng=0,
                            reference_size=100_000, reference=None):
    """Mean W1 between size-N samples and a large reference sample.

    ``sampler(rng, n)`` draws n values. Returns a list of ``(N, mean W1)``.
    """
    rng = make_rng(rng)
    if reference is None:
        reference = sampler(rng, reference_size)
    table = []
    for n in n_grid:
        w = [wasserstein1_1d(sampler(rng, n), reference) for _ in range(trials)]
        table.append((int(n), float(np.mean(w))))
    return table


def loglog_slope(table):
    n = np.log([r[0] for r in table])
    w = np.log([r[1] for r in table])
    return float(np.polyfit(n, w, 1)[0])
