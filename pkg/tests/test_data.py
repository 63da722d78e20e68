import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from measurenet.data import (ExperimentConfig, ResultRow, RobustParams, SetBatch, parse_config,
                             parse_config_text, read_results, sample_robust_sets,
                             sample_uniform_cube_sets, write_results)
from measurenet.exceptions import ConfigError, ResultsFormatError, UsageError


def test_uniform_sampler():
    b = sample_uniform_cube_sets(10, 4, 100, rng=0)
    assert b.points.shape == (400, 10) and len(b) == 100
    assert np.all(np.abs(b.points) <= 3)
    assert np.array_equal(b.points, sample_uniform_cube_sets(10, 4, 100, rng=0).points)
    big = sample_uniform_cube_sets(1, 1, 100_000, rng=1).points
    assert abs(big.mean()) < 0.05
    with pytest.raises(UsageError):
        sample_uniform_cube_sets(0, 4, 10)


def test_setbatch_ragged():
    sets = [np.ones((2, 3)), np.zeros((1, 3)), np.full((4, 3), 2.0)]
    b = SetBatch.from_sets(sets, [1.0, 2.0, 3.0])
    assert len(b) == 3 and b.d == 3 and b.uniform_size is None
    assert np.array_equal(b.set(2), sets[2])
    sub = b.subset([2, 0])
    assert np.array_equal(sub.set(0), sets[2]) and np.array_equal(sub.targets, [3.0, 1.0])
    assert [len(s) for s in b] == [2, 1, 4]


def test_robust_shapes_and_determinism():
    p = RobustParams()
    b, m = sample_robust_sets(p, 20, 50, rng=3)
    assert b.points.shape == (1000, 10) and m.shape == (50, 10)
    b2, m2 = sample_robust_sets(p, 20, 50, rng=3)
    assert np.array_equal(b.points, b2.points) and np.array_equal(m, m2)


def test_robust_contamination_fraction():
    _, _, mask = sample_robust_sets(RobustParams(), 100, 1000, rng=0, return_mask=True)
    assert abs(mask.mean() - 0.2) < 0.01


def test_robust_clean_mean():
    p = RobustParams(eps=0.0)
    b, m = sample_robust_sets(p, 20_000, 2, rng=1)
    for s, mu in zip(b, m):
        assert np.abs(s.mean(axis=0) - mu).max() < 0.05


def test_robust_sample_mean_error_at_20():
    # average squared error per coordinate; the reported table value is 0.153 +- 0.068
    b, m = sample_robust_sets(RobustParams(), 20, 20_000, rng=2)
    est = b.points.reshape(20_000, 20, 10).mean(axis=1)
    mse = np.mean((est - m) ** 2)
    assert abs(mse - 0.153) < 0.068
    assert mse == pytest.approx((0.8 * 1.5**2 + 0.2 * (1.5**2 + 4.0)) / 20, rel=0.03)


def test_robust_params_validation():
    with pytest.raises(UsageError):
        RobustParams(eps=1.5)
    with pytest.raises(UsageError):
        RobustParams(sigma_p=0.0)


def rows():
    return [ResultRow("synthetic/S1/max_inv/0.0/0/1", "S1", "max_inv", 0.0, 4, 8, 0, "mse", 0.1 + 0.2),
            ResultRow("robust/filter/robust_mean/0.0001/2/1", "filter", "robust_mean", 1e-4, 0, 20, 2,
                      "mse", 1 / 3)]


def test_results_round_trip(tmp_path):
    path = tmp_path / "r.csv"
    write_results(rows(), path)
    assert path.read_text().splitlines()[0] == "run_id,class,target,lambda,train_n,test_n,seed,metric,value"
    assert read_results(path) == rows()


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_results_float_lossless(x):
    buf = io.StringIO()
    write_results([ResultRow("r", "S1", "t", 0.0, 1, 1, 0, "mse", x)], buf)
    path = io.StringIO(buf.getvalue())
    assert read_results(path)[0].value == x


def test_empty_report(tmp_path):
    path = tmp_path / "e.csv"
    write_results([], path)
    assert path.read_text() == "run_id,class,target,lambda,train_n,test_n,seed,metric,value\n"
    assert read_results(path) == []


def test_malformed_row_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    write_results(rows(), path)
    with open(path, "a") as fh:
        fh.write("x,S1,t,notanumber,4,4,0,mse,1\n")
    with pytest.raises(ResultsFormatError, match="line 4"):
        read_results(path)


def test_config_examples(tmp_path):
    cfg = parse_config_text("lambda = 1e-4  # fixed\n\n# comment\nclass = S1, S3\n")
    assert cfg.fixed_lambda == 1e-4 and cfg.classes == ("S1", "S3")
    assert cfg.lr == 0.0005 and cfg.iterations == 5000 and cfg.batch == 100
    with pytest.raises(ConfigError):
        parse_config_text("class = S4")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("learning_rate = 1")
    with pytest.raises(ConfigError):
        parse_config_text("iterations = many")
    with pytest.raises(ConfigError):
        parse_config_text("lr = -1")
    with pytest.raises(ConfigError):
        parse_config_text("lr = nan")
    path = tmp_path / "c.cfg"
    path.write_text("seeds = 3\ntest_n = 2, 4\n")
    cfg = parse_config(path)
    assert cfg.seeds == 3 and cfg.test_n == (2, 4)


def test_config_dump():
    buf = io.StringIO()
    ExperimentConfig().dump(buf)
    text = buf.getvalue()
    assert "# lr = 0.0005" in text and "# lambda_grid = 0.0, 1e-06, 0.0001, 0.01" in text
