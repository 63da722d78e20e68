"""Set containers, samplers for the experimental distributions, results CSV and config files."""

import csv
import dataclasses
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigError, DimensionError, ResultsFormatError, UsageError
from .numerics import make_rng


@dataclass
class SetBatch:
    """A batch of point sets stored as one stacked point matrix.

    ``points`` holds every point of every set (``sum(sizes) x d``), set ``i``
    occupying rows ``offsets[i]:offsets[i+1]``. Sets may differ in size.
    """

    points: np.ndarray
    sizes: np.ndarray
    targets: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        if self.points.ndim != 2:
            raise DimensionError(f"points must be 2-D, got shape {self.points.shape}")
        if self.sizes.ndim != 1 or np.any(self.sizes < 1):
            raise UsageError("every set needs at least one point")
        if int(self.sizes.sum()) != self.points.shape[0]:
            raise DimensionError("sizes do not add up to the number of points")
        if self.targets is not None:
            self.targets = np.asarray(self.targets)
            if self.targets.shape[0] != len(self.sizes):
                raise DimensionError("one target per set is required")

    @classmethod
    def from_sets(cls, sets, targets=None):
        sets = [np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in sets]
        if not sets:
            raise UsageError("empty batch")
        dims = {s.shape[1] for s in sets}
        if len(dims) != 1:
            raise DimensionError(f"sets have inconsistent dimensions {sorted(dims)}")
        return cls(np.concatenate(sets, axis=0), [len(s) for s in sets], targets)

    @classmethod
    def from_array(cls, array, targets=None):
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 3:
            raise DimensionError(f"expected (count, N, d) array, got shape {array.shape}")
        count, n, d = array.shape
        return cls(array.reshape(count * n, d), np.full(count, n), targets)

    def __len__(self):
        return len(self.sizes)

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def offsets(self):
        return np.concatenate(([0], np.cumsum(self.sizes)))

    @property
    def uniform_size(self):
        """Common set size, or None when sizes differ."""
        return int(self.sizes[0]) if np.all(self.sizes == self.sizes[0]) else None

    def set(self, i):
        off = self.offsets
        return self.points[off[i]:off[i + 1]]

    def __iter__(self):
        off = self.offsets
        for i in range(len(self)):
            yield self.points[off[i]:off[i + 1]]

    def subset(self, index):
        index = np.asarray(index, dtype=np.int64)
        sets = [self.set(i) for i in index]
        targets = None if self.targets is None else self.targets[index]
        return SetBatch.from_sets(sets, targets)

    def with_targets(self, targets):
        return SetBatch(self.points, self.sizes, targets)


# --- samplers ---------------------------------------------------------------


def sample_uniform_cube_sets(d, n, count, half_width=3.0, rng=0):
    """``count`` sets of ``n`` i.i.d. points from U([-half_width, half_width]^d)."""
    if min(d, n, count) < 1:
        raise UsageError("d, n and count must be positive")
    rng = make_rng(rng)
    pts = rng.uniform(-half_width, half_width, size=(count * n, d))
    return SetBatch(pts, np.full(count, n))


@dataclass
class RobustParams:
    """Contamination model parameters; sigmas are standard deviations.

    With ``shared_outlier_mean`` False (default) the outlier centre m' is
    drawn afresh for every contaminated point; True draws one m' per set.
    """

    sigma_m: float = 1.0
    sigma_m_prime: float = 2.0
    sigma_p: float = 1.5
    sigma_q: float = 1.5
    eps: float = 0.2
    d: int = 10
    shared_outlier_mean: bool = False

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise UsageError("eps must lie in [0, 1]")
        if min(self.sigma_m, self.sigma_m_prime, self.sigma_p, self.sigma_q) <= 0:
            raise UsageError("all sigmas must be positive")
        if self.d < 1:
            raise UsageError("d must be positive")


def sample_robust_sets(params, n, count, rng=0, return_mask=False):
    """Contaminated sets and their true centres.

    Returns ``(batch, means)`` where ``batch.targets is means`` (``count x d``).
    With ``return_mask`` a boolean vector marking outlier points is appended.
    """
    if n < 1 or count < 1:
        raise UsageError("n and count must be positive")
    rng = make_rng(rng)
    d = params.d
    means = rng.normal(0.0, params.sigma_m, size=(count, d))
    centres = np.repeat(means, n, axis=0)
    outlier = rng.random(count * n) < params.eps
    if params.shared_outlier_mean:
        shifted = means + rng.normal(0.0, params.sigma_m_prime, size=(count, d))
        outlier_centres = np.repeat(shifted, n, axis=0)
    else:
        outlier_centres = centres + rng.normal(0.0, params.sigma_m_prime, size=(count * n, d))
    noise = rng.normal(0.0, 1.0, size=(count * n, d))
    pts = np.where(
        outlier[:, None],
        outlier_centres + params.sigma_q * noise,
        centres + params.sigma_p * noise,
    )
    batch = SetBatch(pts, np.full(count, n), means)
    if return_mask:
        return batch, means, outlier
    return batch, means


# --- results CSV ------------------------------------------------------------

RESULT_FIELDS = ("run_id", "class", "target", "lambda", "train_n", "test_n", "seed", "metric", "value")


@dataclass(frozen=True)
class ResultRow:
    run_id: str
    function_class: str
    target: str
    lam: float
    train_n: int
    test_n: int
    seed: int
    metric: str
    value: float


def _fmt(x):
    return format(float(x), ".17g")


def write_results(rows, path_or_file):
    """Write rows to CSV with 17 significant digits (lossless for doubles)."""
    own = _is_path(path_or_file)
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_FIELDS)
        for r in rows:
            writer.writerow([r.run_id, r.function_class, r.target, _fmt(r.lam), r.train_n,
                             r.test_n, r.seed, r.metric, _fmt(r.value)])
    finally:
        if own:
            fh.close()


def _is_path(x):
    return isinstance(x, (str, bytes)) or hasattr(x, "__fspath__")


def read_results(path_or_file):
    if not _is_path(path_or_file):
        return _read_rows(path_or_file, "<stream>")
    with open(path_or_file, newline="") as fh:
        return _read_rows(fh, path_or_file)


def _read_rows(fh, path):
    rows = []
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(header) != RESULT_FIELDS:
        raise ResultsFormatError(f"{path}: line 1: bad header {header!r}")
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(RESULT_FIELDS):
            raise ResultsFormatError(
                f"{path}: line {lineno}: expected {len(RESULT_FIELDS)} fields, got {len(rec)}")
        try:
            rows.append(ResultRow(rec[0], rec[1], rec[2], float(rec[3]), int(rec[4]),
                                  int(rec[5]), int(rec[6]), rec[7], float(rec[8])))
        except ValueError as exc:
            raise ResultsFormatError(f"{path}: line {lineno}: {exc}") from None
    return rows


# --- configuration ----------------------------------------------------------

CLASS_NAMES = ("S1", "S2", "S3", "DeepSetsUnnormalized")


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def _words(text):
    return tuple(t for t in text.replace(",", " ").split())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    """Typed experiment settings. Defaults follow the synthetic protocol."""

    classes: tuple = ("S1", "S2", "S3")
    targets: tuple = ("max_inv", "softmax_inv", "median_inv", "second_inv",
                      "mean_inv", "potential", "neuron", "smooth_neuron")
    d: int = 10
    h1: Optional[int] = None
    h2: Optional[int] = None
    act1: str = "relu"
    act2: str = "relu"
    aug: Optional[float] = None
    half_width: float = 3.0
    lr: float = 5e-4
    iterations: int = 5000
    batch: int = 100
    minibatch: int = 0
    loss: str = "mse"
    lambda_grid: tuple = (0.0, 1e-6, 1e-4, 1e-2)
    fixed_lambda: Optional[float] = None
    seeds: int = 10
    train_n: int = 4
    test_n: tuple = (2, 4, 8, 16, 32, 64)
    n_val: int = 1000
    n_test: int = 1000
    n_jobs: int = 1
    # robust-mean experiment
    robust_eps: float = 0.2
    robust_sigma_m: float = 1.0
    robust_sigma_m_prime: float = 2.0
    robust_sigma_p: float = 1.5
    robust_sigma_q: float = 1.5
    robust_shared_outlier_mean: bool = False
    filter_tau: float = 0.1
    filter_cher: float = 1.5
    # pointcloud MNIST
    max_points: int = 200
    mnist_subset: int = 2000
    mnist_test: int = 1000

    def validate(self):
        for c in self.classes:
            if c not in CLASS_NAMES:
                raise ConfigError(f"class: unknown function class {c!r}")
        for name in ("d", "iterations", "batch", "seeds", "train_n", "n_val", "n_test",
                     "n_jobs", "max_points", "mnist_subset", "mnist_test"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        for name in ("h1", "h2"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.minibatch < 0:
            raise ConfigError("minibatch: must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr: must be positive")
        if any(lam < 0 for lam in self.lambda_grid) or not self.lambda_grid:
            raise ConfigError("lambda: grid must be non-empty and non-negative")
        if self.fixed_lambda is not None and self.fixed_lambda < 0:
            raise ConfigError("lambda: must be non-negative")
        if self.act1 not in ("relu", "relu2") or self.act2 not in ("relu", "relu2"):
            raise ConfigError("act1/act2: expected relu or relu2")
        if self.loss not in ("mse", "cross_entropy"):
            raise ConfigError("loss: expected mse or cross_entropy")
        if not 0.0 <= self.robust_eps <= 1.0:
            raise ConfigError("robust_eps: must lie in [0, 1]")
        if not 0.0 < self.filter_tau < 1.0:
            raise ConfigError("filter_tau: must lie in (0, 1)")
        if any(n < 1 for n in self.test_n):
            raise ConfigError("test_n: sizes must be >= 1")
        return self

    def robust_params(self):
        return RobustParams(self.robust_sigma_m, self.robust_sigma_m_prime, self.robust_sigma_p,
                            self.robust_sigma_q, self.robust_eps, self.d,
                            self.robust_shared_outlier_mean)

    def dump(self, fh=sys.stderr):
        """Echo the effective configuration (for provenance)."""
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            fh.write(f"# {f.name} = {v}\n")


# config key -> (attribute, parser)
_KEYS = {
    "class": ("classes", _words),
    "classes": ("classes", _words),
    "target": ("targets", _words),
    "targets": ("targets", _words),
    "d": ("d", int),
    "h1": ("h1", int),
    "h2": ("h2", int),
    "act1": ("act1", str),
    "act2": ("act2", str),
    "aug": ("aug", float),
    "half_width": ("half_width", float),
    "lr": ("lr", float),
    "iterations": ("iterations", int),
    "batch": ("batch", int),
    "minibatch": ("minibatch", int),
    "loss": ("loss", str),
    "lambda": ("fixed_lambda", float),
    "lambda_grid": ("lambda_grid", _floats),
    "seeds": ("seeds", int),
    "train_n": ("train_n", int),
    "test_n": ("test_n", _ints),
    "n_val": ("n_val", int),
    "n_test": ("n_test", int),
    "n_jobs": ("n_jobs", int),
    "robust_eps": ("robust_eps", float),
    "robust_sigma_m": ("robust_sigma_m", float),
    "robust_sigma_m_prime": ("robust_sigma_m_prime", float),
    "robust_sigma_p": ("robust_sigma_p", float),
    "robust_sigma_q": ("robust_sigma_q", float),
    "robust_shared_outlier_mean": ("robust_shared_outlier_mean", _bool),
    "filter_tau": ("filter_tau", float),
    "filter_cher": ("filter_cher", float),
    "max_points": ("max_points", int),
    "mnist_subset": ("mnist_subset", int),
    "mnist_test": ("mnist_test", int),
}


def parse_config_text(text, base=None, source="<config>"):
    """Parse ``key = value`` lines on top of ``base`` (or the defaults)."""
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        attr, conv = _KEYS[key]
        try:
            parsed = conv(value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value {value!r} for {key}") from None
        if isinstance(parsed, float) and not math.isfinite(parsed):
            raise ConfigError(f"{source}:{lineno}: non-finite value for {key}")
        setattr(cfg, attr, parsed)
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path, base=None):
    with open(path) as fh:
        return parse_config_text(fh.read(), base=base, source=str(path))

