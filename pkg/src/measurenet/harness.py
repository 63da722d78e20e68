"""Experiment orchestration: lambda selection, multi-seed cells, cross-N evaluation."""

import dataclasses
import logging
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from . import diagnostics as diag
from .api import MeasureNetClassifier, MeasureNetRegressor
from .data import (ExperimentConfig, ResultRow, sample_robust_sets,
                   sample_uniform_cube_sets)
from .estimators import ESTIMATORS
from .exceptions import UsageError
from .numerics import derive_rng, derive_seed
from .targets import eval_targets, make_planted_neuron, make_target

log = logging.getLogger(__name__)

EXPERIMENTS = ("synthetic", "robust", "mnist", "deepsets_compare", "diagnostics")

ROBUST_DEFAULTS = dict(classes=("S1", "S2", "S3"), targets=("robust_mean_truth",), train_n=20,
                       test_n=(10, 20, 30, 40), iterations=30000, batch=5000)
ROBUST_DESK = dict(iterations=5000, batch=500)

MNIST_DEFAULTS = dict(classes=("S1", "S2", "S3"), targets=("digit",), d=3, h1=500, h2=500,
                      lr=1e-3, train_n=200, test_n=(100, 200), seeds=5, loss="cross_entropy",
                      lambda_grid=(0.0,), minibatch=100, iterations=5000)
MNIST_DESK = dict(h1=100, h2=100, iterations=3000, seeds=1)

SYNTHETIC_DESK = dict(seeds=3, n_val=500, n_test=500)

DEEPSETS_DEFAULTS = dict(classes=("S1", "DeepSetsUnnormalized"), targets=("mean_inv",))

BASELINES = ("mean", "geomedian", "filter")


def experiment_config(experiment, desk=False):
    """Default configuration for an experiment (desk-scale when ``desk``)."""
    if experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {experiment!r}")
    overrides = {}
    if experiment == "robust":
        overrides = dict(ROBUST_DEFAULTS, **(ROBUST_DESK if desk else {}))
    elif experiment == "mnist":
        overrides = dict(MNIST_DEFAULTS, **(MNIST_DESK if desk else {}))
    elif experiment == "deepsets_compare":
        overrides = dict(DEEPSETS_DEFAULTS, **(SYNTHETIC_DESK if desk else {}))
    elif desk:
        overrides = SYNTHETIC_DESK
    return dataclasses.replace(ExperimentConfig(), **overrides)


# --- run ids ----------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    experiment: str
    function_class: str
    target: str
    lam: float
    seed_index: int
    base_seed: int

    @property
    def run_id(self):
        return "/".join([self.experiment, self.function_class, self.target, repr(float(self.lam)),
                         str(self.seed_index), str(self.base_seed)])

    @classmethod
    def parse(cls, run_id):
        parts = run_id.split("/")
        if len(parts) != 6:
            raise UsageError(f"malformed run id {run_id!r}")
        exp, klass, target, lam, idx, base = parts
        try:
            return cls(exp, klass, target, float(lam), int(idx), int(base))
        except ValueError:
            raise UsageError(f"malformed run id {run_id!r}") from None


def cell_seed(base_seed, function_class, target, lam, seed_index):
    return derive_seed(base_seed, function_class, target, float(lam), seed_index)


# --- targets and data ---------------------------------------------------------


def build_target(name, cfg, base_seed):
    if name in ("neuron", "smooth_neuron"):
        return make_planted_neuron(name, cfg.d, derive_seed(base_seed, "planted", name), cfg.aug,
                                   cfg.half_width)
    return make_target(name)


def _uniform_sets(cfg, n, count, *key):
    return sample_uniform_cube_sets(cfg.d, n, count, cfg.half_width, rng=derive_rng(*key))


def make_model(function_class, target, cfg, lam, seed):
    first_layer = None
    if target.kind == "smooth_neuron" and function_class in ("S2", "S3"):
        first_layer = target.planted_net
    h1 = None if first_layer is not None else cfg.h1
    return MeasureNetRegressor(function_class, h1=h1, h2=cfg.h2, act1=cfg.act1, act2=cfg.act2,
                               aug=cfg.aug, reg_lambda=lam, lr=cfg.lr, max_iter=cfg.iterations,
                               minibatch=cfg.minibatch, first_layer=first_layer, random_state=seed)


def mse(pred, y):
    pred = np.asarray(pred, dtype=np.float64).reshape(np.shape(y))
    return float(np.mean((pred - y) ** 2))


# --- lambda selection -----------------------------------------------------------


def select_lambda(errors, rtol=1e-6, atol=1e-10):
    """Grid value with the lowest error; near-ties go to the largest lambda."""
    best = min(errors.values())
    tied = [lam for lam, e in errors.items() if e <= best + rtol * best + atol]
    return max(tied)


def cross_validate_lambda(function_class, target, cfg, lambda_grid=None, base_seed=0,
                          return_errors=False):
    """Pick lambda by validation MSE on ``cfg.n_val`` fresh sets at the training size."""
    grid = tuple(cfg.lambda_grid if lambda_grid is None else lambda_grid)
    if not grid:
        raise UsageError("empty lambda grid")
    name = target.kind
    train_b = _uniform_sets(cfg, cfg.train_n, cfg.batch, base_seed, "cv-train", name)
    val_b = _uniform_sets(cfg, cfg.train_n, cfg.n_val, base_seed, "cv-val", name)
    y_tr, y_val = eval_targets(target, train_b), eval_targets(target, val_b)
    errors = {}
    for lam in grid:
        seed = derive_seed(base_seed, "cv-init", function_class, name)
        model = make_model(function_class, target, cfg, lam, seed).fit(train_b, y_tr[:, 0])
        errors[lam] = mse(model.predict(val_b), y_val[:, 0])
        log.info("cv %s/%s lambda=%g val_mse=%.4g", function_class, name, lam, errors[lam])
    chosen = select_lambda(errors)
    return (chosen, errors) if return_errors else chosen


# --- cells -------------------------------------------------------------------


def run_synthetic_cell(cell, cfg, target=None):
    target = target or build_target(cell.target, cfg, cell.base_seed)
    seed = cell_seed(cell.base_seed, cell.function_class, cell.target, cell.lam, cell.seed_index)
    train_b = _uniform_sets(cfg, cfg.train_n, cfg.batch, cell.base_seed, "train", cell.target,
                            cell.seed_index)
    y = eval_targets(target, train_b)[:, 0]
    model = make_model(cell.function_class, target, cfg, cell.lam, seed).fit(train_b, y)
    rows = []
    for n in cfg.test_n:
        test_b = _uniform_sets(cfg, n, cfg.n_test, cell.base_seed, "test", cell.target, n,
                               cell.seed_index)
        err = mse(model.predict(test_b), eval_targets(target, test_b)[:, 0])
        rows.append(ResultRow(cell.run_id, cell.function_class, cell.target, cell.lam, cfg.train_n,
                              n, cell.seed_index, "mse", err))
    return rows


def _robust_test(cfg, n, base_seed, seed_index):
    return sample_robust_sets(cfg.robust_params(), n, cfg.n_test,
                              rng=derive_rng(base_seed, "robust-test", n, seed_index))


def _robust_train(cfg, base_seed, key):
    return sample_robust_sets(cfg.robust_params(), cfg.train_n, cfg.batch,
                              rng=derive_rng(base_seed, "robust-train", key))


def robust_model(function_class, cfg, lam, seed):
    return MeasureNetRegressor(function_class, h1=cfg.h1, h2=cfg.h2, act1=cfg.act1, act2=cfg.act2,
                               aug=cfg.aug, reg_lambda=lam, lr=cfg.lr, max_iter=cfg.iterations,
                               minibatch=cfg.minibatch, random_state=seed)


def estimate_batch(name, batch, cfg):
    fn = ESTIMATORS[name]
    if name == "filter":
        return np.array([fn(s, tau=cfg.filter_tau, cher=cfg.filter_cher) for s in batch])
    return np.array([fn(s) for s in batch])


def run_robust_cell(cell, cfg):
    rows = []
    if cell.function_class in BASELINES:
        for n in cfg.test_n:
            test_b, means = _robust_test(cfg, n, cell.base_seed, cell.seed_index)
            err = mse(estimate_batch(cell.function_class, test_b, cfg), means)
            rows.append(ResultRow(cell.run_id, cell.function_class, cell.target, 0.0, 0, n,
                                  cell.seed_index, "mse", err))
        return rows
    seed = cell_seed(cell.base_seed, cell.function_class, cell.target, cell.lam, cell.seed_index)
    train_b, means = _robust_train(cfg, cell.base_seed, cell.seed_index)
    model = robust_model(cell.function_class, cfg, cell.lam, seed).fit(train_b, means)
    for n in cfg.test_n:
        test_b, test_means = _robust_test(cfg, n, cell.base_seed, cell.seed_index)
        err = mse(model.predict(test_b), test_means)
        rows.append(ResultRow(cell.run_id, cell.function_class, cell.target, cell.lam, cfg.train_n,
                              n, cell.seed_index, "mse", err))
    return rows


def cross_validate_robust(function_class, cfg, base_seed=0):
    train_b, means = _robust_train(cfg, base_seed, "cv")
    val_b, val_means = sample_robust_sets(cfg.robust_params(), cfg.train_n, cfg.n_val,
                                          rng=derive_rng(base_seed, "robust-cv-val"))
    errors = {}
    for lam in cfg.lambda_grid:
        seed = derive_seed(base_seed, "cv-init", function_class, "robust")
        model = robust_model(function_class, cfg, lam, seed).fit(train_b, means)
        errors[lam] = mse(model.predict(val_b), val_means)
    return select_lambda(errors)


# --- MNIST -------------------------------------------------------------------


def load_mnist_split(cfg, images_path, labels_path, base_seed, test_images=None, test_labels=None):
    """(train images, train labels, test images, test labels) as uint8 arrays.

    Without separate test files the single file pair is shuffled and split:
    the first ``mnist_subset`` images train, the next ``mnist_test`` test.
    """
    from .ingest import parse_idx

    images = parse_idx(images_path, "images")
    labels = parse_idx(labels_path, "labels")
    if len(images) != len(labels):
        raise UsageError("image and label files disagree on the number of items")
    order = derive_rng(base_seed, "mnist-split").permutation(len(images))
    if test_images is None:
        tr = order[:cfg.mnist_subset]
        te = order[cfg.mnist_subset:cfg.mnist_subset + cfg.mnist_test]
        if len(te) == 0:
            raise UsageError("not enough images left for a test split")
        return images[tr], labels[tr], images[te], labels[te]
    t_images = parse_idx(test_images, "images")
    t_labels = parse_idx(test_labels, "labels")
    t_order = derive_rng(base_seed, "mnist-test").permutation(len(t_images))[:cfg.mnist_test]
    tr = order[:cfg.mnist_subset]
    return images[tr], labels[tr], t_images[t_order], t_labels[t_order]


def run_mnist_cell(cell, cfg, split):
    from .ingest import images_to_batch

    tr_img, tr_lab, te_img, te_lab = split
    seed = cell_seed(cell.base_seed, cell.function_class, cell.target, cell.lam, cell.seed_index)
    train_b = images_to_batch(tr_img, tr_lab, cfg.max_points, seed=derive_seed(cell.base_seed, "pc-train"))
    model = MeasureNetClassifier(cell.function_class, h1=cfg.h1, h2=cfg.h2, act1=cfg.act1,
                                 act2=cfg.act2, aug=cfg.aug, reg_lambda=cell.lam, lr=cfg.lr,
                                 max_iter=cfg.iterations, minibatch=cfg.minibatch,
                                 random_state=seed)
    model.fit(train_b, train_b.targets)
    rows = []
    for n in cfg.test_n:
        test_b = images_to_batch(te_img, te_lab, n, seed=derive_seed(cell.base_seed, "pc-test", n))
        err = float(np.mean(model.predict(test_b) != test_b.targets))
        rows.append(ResultRow(cell.run_id, cell.function_class, cell.target, cell.lam,
                              cfg.max_points, n, cell.seed_index, "error_rate", err))
    return rows


# --- suites ------------------------------------------------------------------


def _safe(fn, cell, *args):
    try:
        return fn(cell, *args), None
    except Exception as exc:  # per-cell failures are recorded, the suite goes on
        log.error("cell %s failed: %s", cell.run_id, exc)
        return [], f"{cell.run_id}: {type(exc).__name__}: {exc}"


def _run_cells(fn, cells, cfg, *args):
    results = Parallel(n_jobs=cfg.n_jobs)(delayed(_safe)(fn, c, cfg, *args) for c in cells)
    rows, failures = [], []
    for r, f in results:
        rows.extend(r)
        if f:
            failures.append(f)
    return rows, failures


def run_suite(experiment, cfg, base_seed=0, mnist_paths=None):
    """Run an experiment; returns ``(rows, failures)``.

    For ``diagnostics`` the rows are :func:`diagnostic_rows` tuples.
    """
    if experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {experiment!r}")
    if experiment == "diagnostics":
        return diagnostic_rows(base_seed), []
    if experiment in ("synthetic", "deepsets_compare"):
        cells = []
        for name in cfg.targets:
            target = build_target(name, cfg, base_seed)
            for klass in cfg.classes:
                lam = cfg.fixed_lambda
                if lam is None:
                    lam = cross_validate_lambda(klass, target, cfg, base_seed=base_seed)
                cells += [Cell(experiment, klass, name, lam, i, base_seed) for i in range(cfg.seeds)]
        return _run_cells(run_synthetic_cell, cells, cfg)
    if experiment == "robust":
        cells = []
        for klass in cfg.classes:
            lam = cfg.fixed_lambda
            if lam is None:
                lam = cross_validate_robust(klass, cfg, base_seed)
            cells += [Cell("robust", klass, "robust_mean", lam, i, base_seed) for i in range(cfg.seeds)]
        cells += [Cell("robust", b, "robust_mean", 0.0, i, base_seed)
                  for b in BASELINES for i in range(cfg.seeds)]
        return _run_cells(run_robust_cell, cells, cfg)
    if not mnist_paths:
        raise UsageError("the mnist experiment needs --images and --labels")
    split = load_mnist_split(cfg, base_seed=base_seed, **mnist_paths)
    lam = cfg.fixed_lambda if cfg.fixed_lambda is not None else cfg.lambda_grid[0]
    cells = [Cell("mnist", k, "digit", lam, i, base_seed) for k in cfg.classes for i in range(cfg.seeds)]
    return _run_cells(run_mnist_cell, cells, cfg, split)


def replay(run_id, cfg, mnist_paths=None):
    """Recompute the rows of one cell from its run id."""
    cell = Cell.parse(run_id)
    if cell.experiment in ("synthetic", "deepsets_compare"):
        return run_synthetic_cell(cell, cfg)
    if cell.experiment == "robust":
        return run_robust_cell(cell, cfg)
    if cell.experiment == "mnist":
        if not mnist_paths:
            raise UsageError("replaying an mnist cell needs --images and --labels")
        return run_mnist_cell(cell, cfg, load_mnist_split(cfg, base_seed=cell.base_seed, **mnist_paths))
    raise UsageError(f"cannot replay experiment {cell.experiment!r}")


def summarize(rows):
    """Mean and unbiased std over seeds, keyed by (class, target, lambda, train_n, test_n, metric)."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r.function_class, r.target, r.lam, r.train_n, r.test_n, r.metric)].append(r.value)
    out = {}
    for key, vals in groups.items():
        vals = np.asarray(vals)
        std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out[key] = (float(vals.mean()), std, len(vals))
    return out


# --- diagnostics -------------------------------------------------------------


def diagnostic_rows(base_seed=0):
    """Rows ``(check, parameter, value, bound, ok)`` for the measure-continuity probes."""
    rows = []
    rng = derive_rng(base_seed, "diagnostics")
    mx, mean = make_target("max"), make_target("mean")
    for n in (2, 4, 8, 16, 32):
        mu, nu = diag.dirac_pair(n)
        r = diag.lipschitz_ratio(mx, mu, nu)
        rows.append(("max_ratio_dirac", n, r, float(n), r == n))
        r = diag.lipschitz_ratio(mean, mu, nu)
        rows.append(("mean_ratio_dirac", n, r, 1.0, r <= 1 + 1e-9))
    rep = diag.continuity_modulus(mean, rng=rng)
    rows.append(("mean_max_ratio", rep.pairs, rep.max_ratio, 1.0, rep.max_ratio <= 1 + 1e-9))
    for lam in (0.1, 1.0, 10.0):
        # values in [0, 1]: |log A - log B| <= |A - B| with A, B >= 1, and exp(lam v) is
        # lam e^lam Lipschitz, so the ratio is at most e^lam whatever the set sizes
        rep = diag.continuity_modulus(make_target("softmax", lam=lam), rng=rng,
                                      family=(2, 4, 8, 16, 32, 64, 128))
        bound = float(np.exp(lam))
        rows.append(("softmax_max_ratio", lam, rep.max_ratio, bound, rep.max_ratio <= bound))
    for name in ("mean", "max", "median", "softmax", "second"):
        t = make_target(name)
        gap = diag.duplication_check(t, [1.0, 2.0], 2)
        expect = 1.0 if name == "second" else 0.0
        rows.append((f"duplication_{name}", 2, gap, expect, gap == expect))
    for lam in (0.1, 1.0, 10.0):
        worst = 0.0
        ok = True
        for _ in range(100):
            v = rng.random(int(rng.integers(1, 65)))
            gap, bound, good = diag.softmax_bound_check(v, lam)
            ok &= good
            worst = max(worst, gap - bound)
        rows.append(("softmax_bound", lam, worst, 0.0, ok))
    table = diag.empirical_concentration(lambda g, n: g.random(n), trials=50, rng=rng)
    for n, w in table:
        rows.append(("concentration_w1", n, w, float("nan"), True))
    slope = diag.loglog_slope(table)
    rows.append(("concentration_slope", 0, slope, -0.5, abs(slope + 0.5) <= 0.15))
    return rows


def write_diagnostics(rows, fh):
    import csv

    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["check", "parameter", "value", "bound", "ok"])
    for check, param, value, bound, ok in rows:
        w.writerow([check, param, format(float(value), ".17g"), format(float(bound), ".17g"),
                    int(bool(ok))])
