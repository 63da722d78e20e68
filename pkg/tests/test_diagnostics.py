import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from measurenet.diagnostics import (continuity_modulus, dirac_pair, duplication_check,
                                    empirical_concentration, lipschitz_ratio, loglog_slope,
                                    replicate, softmax_bound_check, wasserstein1_1d)
from measurenet.targets import make_target

from helpers import w1_assignment

small = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=5)


def test_w1_examples():
    assert wasserstein1_1d([1.0, 2.0, 2.0], [2.0, 1.0, 2.0]) == 0.0
    mu, nu = dirac_pair(4)
    assert wasserstein1_1d(mu, nu) == 0.25
    assert wasserstein1_1d([0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]) == 0.25
    assert wasserstein1_1d([0.0, 1.0], [0.0, 0.0]) == 0.5


@given(small, small)
def test_w1_matches_assignment(a, b):
    assert abs(wasserstein1_1d(a, b) - w1_assignment(a, b)) <= 1e-12 * max(1.0, np.abs(a + b).max())


@given(small, small, small)
def test_w1_metric(a, b, c):
    ab, ba = wasserstein1_1d(a, b), wasserstein1_1d(b, a)
    assert ab == ba and ab >= 0
    assert wasserstein1_1d(a, c) <= ab + wasserstein1_1d(b, c) + 1e-12


@given(small, st.integers(1, 4))
def test_w1_zero_iff_same_measure(a, k):
    assert wasserstein1_1d(a, replicate(np.asarray(a), k)) == 0.0
    assert wasserstein1_1d(a, np.asarray(a) + 0.5) > 0


def test_continuity_probe():
    rep = continuity_modulus(make_target("max"), family=(2, 4, 8, 16))
    assert [r for _, r in rep.family] == [2.0, 4.0, 8.0, 16.0]
    rep = continuity_modulus(make_target("mean"), rng=1)
    assert rep.max_ratio <= 1 + 1e-9
    assert all(v >= 0 for v in rep.quantiles.values())
    assert lipschitz_ratio(make_target("max"), [1.0, 2.0], [2.0, 1.0]) is None


def test_softmax_ratio_bounded_on_family():
    # normalized soft maximum, lam = 10: ratios stay below e^lam however large N gets
    t = make_target("softmax", lam=10.0)
    ratios = [lipschitz_ratio(t, *dirac_pair(n)) for n in (2, 8, 64, 1024, 2**16, 2**20)]
    limit = (math.exp(10.0) - 1) / 10.0  # the N -> infinity value of the ratio
    assert max(ratios) <= limit <= math.exp(10.0)
    assert ratios[-1] == pytest.approx(limit, rel=0.02)


def test_duplication_examples():
    x = np.random.default_rng(0).uniform(size=6)
    for k in (1, 2, 5):
        assert duplication_check(make_target("mean"), x, k) == 0.0
        assert duplication_check(make_target("max"), x, k) == 0.0
    assert duplication_check(make_target("second"), [1.0, 2.0], 2) == 1.0


def test_softmax_bound_examples():
    assert softmax_bound_check([0.3], 2.0) == (0.0, 0.0, True)
    gap, bound, ok = softmax_bound_check([0.0, 1.0], 1.0)
    assert gap == pytest.approx(1 - math.log((1 + math.e) / 2))
    assert gap == pytest.approx(0.3799, abs=1e-4)
    assert bound == pytest.approx(math.log(2)) and ok
    # large values do not overflow
    assert softmax_bound_check([1e4, 0.0], 10.0)[2]


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=64), st.sampled_from([0.1, 1.0, 10.0]))
def test_softmax_bound_property(values, lam):
    assert softmax_bound_check(values, lam)[2]


def test_concentration():
    sampler = (lambda g, n: g.random(n))
    table = empirical_concentration(sampler, (8, 32, 128, 512), trials=40, rng=0)
    w = [v for _, v in table]
    assert all(a > b for a, b in zip(w, w[1:]))
    assert abs(loglog_slope(table) + 0.5) <= 0.15
    ref = np.random.default_rng(3).random(100)
    same = empirical_concentration(lambda g, n: ref[:n], (100,), trials=2, rng=0, reference=ref)
    assert same == [(100, 0.0)]
