"""Ground-truth symmetric set functions.

Scalar families are evaluated on the empirical measure of per-point values
(inverse Euclidean norms for the ``*_inv`` kinds, the raw 1-D coordinate
for the plain kinds). Working with distinct atoms and their weights makes
the normalized families exactly invariant to permutations and to
duplicating every point.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import SetBatch, sample_uniform_cube_sets
from .exceptions import DomainError, UsageError
from .model import InitSpec, MeasureNet, forward_batch, init_model


def empirical_measure(values):
    """Distinct atoms (sorted) and their probability weights."""
    atoms, counts = np.unique(np.asarray(values, dtype=np.float64), return_counts=True)
    return atoms, counts / counts.sum()


def measure_mean(values):
    atoms, w = empirical_measure(values)
    return math.fsum(atoms * w)


def set_max(values):
    return float(np.max(values))


def set_median(values):
    """Median; for an even count, the midpoint of the two central values."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = len(v)
    if n % 2:
        return float(v[n // 2])
    return float(0.5 * (v[n // 2 - 1] + v[n // 2]))


def second_largest(values):
    v = np.sort(np.asarray(values, dtype=np.float64))
    if len(v) < 2:
        raise DomainError("second largest needs at least two values")
    return float(v[-2])


def softmax_sum(values, lam=0.1):
    """``lam * log(sum_i exp(v_i / lam))`` (un-normalized smooth maximum)."""
    v = np.asarray(values, dtype=np.float64)
    m = v.max()
    return float(m + lam * math.log(math.fsum(np.exp((v - m) / lam))))


def softmax_mean(values, lam=1.0):
    """``(1/lam) * log(mean_i exp(lam * v_i))``, computed on the empirical measure.

    Within ``log(N) / lam`` of the maximum and a function of the measure only.
    """
    atoms, w = empirical_measure(values)
    m = atoms.max()
    return float(m + math.log(math.fsum(w * np.exp(lam * (atoms - m)))) / lam)


def inverse_norms(points):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    norms = np.linalg.norm(points, axis=1)
    if np.any(norms == 0):
        raise DomainError("inverse norm undefined for a point at the origin")
    return 1.0 / norms


def raw_values(points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 2:
        if points.shape[1] != 1:
            raise UsageError("raw-value targets need 1-D points")
        points = points[:, 0]
    return points


def potential(points):
    """Mean inverse pairwise distance ``2/(N(N-1)) sum_{i<j} 1/|x_i - x_j|``."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = len(points)
    if n < 2:
        raise DomainError("potential needs at least two points")
    i, j = np.triu_indices(n, k=1)
    dist = np.linalg.norm(points[i] - points[j], axis=1)
    if np.any(dist == 0):
        raise DomainError("potential undefined for coincident points")
    return 2.0 / (n * (n - 1)) * math.fsum(1.0 / dist)


# kind -> (point map, value functional, functional parameter names)
_SCALAR_KINDS = {
    "max_inv": (inverse_norms, "max"),
    "softmax_inv": (inverse_norms, "softmax"),
    "median_inv": (inverse_norms, "median"),
    "second_inv": (inverse_norms, "second"),
    "mean_inv": (inverse_norms, "mean"),
    "max": (raw_values, "max"),
    "softmax": (raw_values, "softmax"),
    "median": (raw_values, "median"),
    "second": (raw_values, "second"),
    "mean": (raw_values, "mean"),
}

TARGET_KINDS = tuple(_SCALAR_KINDS) + ("potential", "neuron", "smooth_neuron",
                                       "robust_mean_truth", "constant")

SYNTHETIC_TARGETS = ("max_inv", "softmax_inv", "median_inv", "second_inv",
                     "mean_inv", "potential", "neuron", "smooth_neuron")

ALIASES = {"second_largest_inv": "second_inv"}


@dataclass(frozen=True)
class TargetSpec:
    """A target family and its parameters.

    ``softmax_inv`` defaults to the un-normalized form with ``lam = 0.1``;
    plain ``softmax`` defaults to the normalized (measure) form with
    ``lam = 1``. Either can be switched through ``params["form"]``
    (``"sum"`` or ``"mean"``).
    """

    kind: str
    params: dict = field(default_factory=dict)
    planted_net: Optional[MeasureNet] = None

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise UsageError(f"unknown target {self.kind!r}")
        if (self.planted_net is not None) != (self.kind in ("neuron", "smooth_neuron")):
            raise UsageError("planted_net is required exactly for neuron targets")
        lam = self.params.get("lam")
        if lam is not None and lam <= 0:
            raise UsageError("softmax temperature lam must be positive")

    @property
    def name(self):
        return self.kind

    @property
    def output_dim(self):
        return self.planted_net.o if self.planted_net is not None else 1


def make_target(kind, **params):
    kind = ALIASES.get(kind, kind)
    if kind in ("neuron", "smooth_neuron"):
        return make_planted_neuron(kind, params.get("d", 10), params.get("seed", 0), params.get("aug"))
    return TargetSpec(kind, dict(params))


def _scalar(spec, values):
    fn = _SCALAR_KINDS[spec.kind][1]
    if fn == "max":
        return set_max(values)
    if fn == "median":
        return set_median(values)
    if fn == "second":
        return second_largest(values)
    if fn == "mean":
        return measure_mean(values)
    is_inv = spec.kind == "softmax_inv"
    form = spec.params.get("form", "sum" if is_inv else "mean")
    lam = spec.params.get("lam", 0.1 if is_inv else 1.0)
    if form == "sum":
        return softmax_sum(values, lam)
    if form == "mean":
        return softmax_mean(values, lam)
    raise UsageError(f"unknown softmax form {form!r}")


def eval_target(spec, points):
    """Target value on one set (float, or an array for vector targets)."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        raise UsageError("empty set")
    if spec.kind in _SCALAR_KINDS:
        return _scalar(spec, _SCALAR_KINDS[spec.kind][0](points))
    if spec.kind == "potential":
        return potential(points)
    if spec.kind == "constant":
        return float(spec.params.get("value", 0.0))
    if spec.kind == "robust_mean_truth":
        raise UsageError("robust_mean_truth is carried by the sampler, not computable from a set")
    if points.ndim == 1:
        points = points[:, None]
    out, _ = forward_batch(spec.planted_net, SetBatch(points, [len(points)]))
    return float(out[0, 0]) if spec.planted_net.o == 1 else out[0]


def eval_targets(spec, batch):
    """Targets for every set of a batch as a ``len(batch) x o`` array."""
    if spec.kind == "robust_mean_truth":
        if batch.targets is None:
            raise UsageError("batch carries no true means")
        return np.asarray(batch.targets, dtype=np.float64)
    if spec.planted_net is not None:
        out, _ = forward_batch(spec.planted_net, batch)
        return out
    return np.array([eval_target(spec, s) for s in batch], dtype=np.float64)[:, None]


def make_planted_neuron(kind, d=10, seed=0, aug=None, half_width=3.0):
    """Planted single-neuron target.

    ``neuron``: one inner and one outer unit, first layer drawn from the
    +-1 Gaussian mixture (far from the models' initial distribution).
    ``smooth_neuron``: 100 inner units drawn like the models' own first
    layer, one outer unit. The second layer's sign is chosen so the outer
    unit is active on at least half of a probe sample (an identically zero
    neuron is a useless target), and the output layer is rescaled to unit
    standard deviation on that probe so targets from different seeds are
    comparable.
    """
    if d < 1:
        raise UsageError("d must be >= 1")
    if kind == "neuron":
        net = init_model("S1", d, 1, 1, 1, aug=aug, init=InitSpec("gaussian_mixture", seed))
    elif kind == "smooth_neuron":
        net = init_model("S1", d, 100, 1, 1, aug=aug, init=InitSpec("kaiming_uniform", seed))
    else:
        raise UsageError(f"not a planted neuron kind: {kind!r}")
    probe = sample_uniform_cube_sets(d, 4, 256, half_width, rng=seed)
    _, cache = forward_batch(net, probe)
    if np.mean(cache.z2 > 0) < 0.5:
        net.W2 = -net.W2
    out, _ = forward_batch(net, probe)
    spread = out.std()
    if spread > 0:
        net.W3 = net.W3 / spread
    net.touch()
    return TargetSpec(kind, {"d": d, "seed": seed}, net)


def gibbs_estimate(values, beta, domain, nodes=2001):
    """Smoothed argmin of ``t -> mean_i |t - v_i|`` (a soft median).

    Returns ``int t exp(-beta E(t)) dt / int exp(-beta E(t)) dt`` over the
    interval ``domain`` with the trapezoid rule on ``nodes`` uniform nodes.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise UsageError("empty value set")
    if not beta > 0:
        raise UsageError("beta must be positive")
    a, b = map(float, domain)
    if not a < b or values.min() < a or values.max() > b:
        raise UsageError("domain must be an interval containing every value")
    if nodes < 10:
        raise UsageError("need at least 10 quadrature nodes")
    t = np.linspace(a, b, int(nodes))
    energy = np.abs(t[:, None] - values[None, :]).mean(axis=1)
    logw = -beta * energy
    w = np.exp(logw - logw.max())
    return float(np.trapezoid(t * w, t) / np.trapezoid(w, t))
