"""Three-layer networks on empirical measures (normalized DeepSets).

For an input set ``x_1..x_N`` in R^d the network computes::

    pooled = (1/N) * sum_i act1(W1 @ [x_i, aug])
    out    = W3 @ act2(W2 @ pooled)

The function classes differ only in which layers are trained:
S1 trains everything, S2 freezes W1, S3 freezes W1 and W2. Frozen matrices
have unit-norm rows. ``DeepSetsUnnormalized`` is S1 with sum pooling.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import SetBatch
from .exceptions import DimensionError, UsageError
from .numerics import ACTIVATIONS, activation, activation_derivative, make_rng, row_sq_norms

FROZEN = {
    "S1": (False, False, False),
    "S2": (True, False, False),
    "S3": (True, True, False),
    "DeepSetsUnnormalized": (False, False, False),
}

DEFAULT_WIDTHS = {
    "S1": (100, 100),
    "S2": (100, 1000),
    "S3": (1000, 1000),
    "DeepSetsUnnormalized": (100, 100),
}

LAYERS = ("W1", "W2", "W3")


def check_class(function_class):
    if function_class not in FROZEN:
        raise UsageError(f"unknown function class {function_class!r}; expected one of {tuple(FROZEN)}")
    return function_class


DEFAULT_AUG = 1.0


@dataclass
class MeasureNet:
    W1: np.ndarray
    W2: np.ndarray
    W3: np.ndarray
    act1: str = "relu"
    act2: str = "relu"
    function_class: str = "S1"
    aug: float = 1.0
    first_layer_scale: Optional[np.ndarray] = None
    version: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        check_class(self.function_class)
        for kind in (self.act1, self.act2):
            if kind not in ACTIVATIONS:
                raise UsageError(f"unknown activation {kind!r}")
        self.W1 = np.array(self.W1, dtype=np.float64, ndmin=2)
        self.W2 = np.array(self.W2, dtype=np.float64, ndmin=2)
        self.W3 = np.array(self.W3, dtype=np.float64, ndmin=2)
        if self.W2.shape[1] != self.W1.shape[0] or self.W3.shape[1] != self.W2.shape[0]:
            raise DimensionError(
                f"inconsistent layer shapes {self.W1.shape}, {self.W2.shape}, {self.W3.shape}")
        if self.W1.shape[1] < 2:
            raise DimensionError("W1 needs d + 1 >= 2 columns")

    @property
    def frozen(self):
        return FROZEN[self.function_class]

    @property
    def normalized(self):
        return self.function_class != "DeepSetsUnnormalized"

    @property
    def d(self):
        return self.W1.shape[1] - 1

    @property
    def h1(self):
        return self.W1.shape[0]

    @property
    def h2(self):
        return self.W2.shape[0]

    @property
    def o(self):
        return self.W3.shape[0]

    @property
    def trainable(self):
        return tuple(name for name, fz in zip(LAYERS, self.frozen) if not fz)

    def parameters(self):
        """Trainable weight arrays by name (live references)."""
        return {name: getattr(self, name) for name in self.trainable}

    def touch(self):
        """Mark the weights as modified; invalidates outstanding caches."""
        self.version += 1

    def copy(self):
        return MeasureNet(self.W1.copy(), self.W2.copy(), self.W3.copy(), self.act1, self.act2,
                          self.function_class, self.aug,
                          None if self.first_layer_scale is None else self.first_layer_scale.copy())


@dataclass
class InitSpec:
    scheme: str = "kaiming_uniform"
    seed: int = 0


def kaiming_uniform(rng, rows, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(rows, fan_in))


def gaussian_mixture(rng, shape, centre=1.0, scale=0.5):
    """Elementwise draws from 0.5 N(centre, scale^2) + 0.5 N(-centre, scale^2)."""
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return signs * centre + scale * rng.standard_normal(shape)


def normalize_rows(w):
    norms = np.sqrt(row_sq_norms(w))
    if np.any(norms == 0):
        raise UsageError("cannot normalize a zero row")
    return w / norms[:, None], norms


def init_model(function_class="S1", d=10, h1=None, h2=None, o=1, act1="relu", act2="relu",
               aug=None, init=None):
    """Randomly initialised network; frozen layers get unit-norm rows."""
    check_class(function_class)
    dh1, dh2 = DEFAULT_WIDTHS[function_class]
    h1 = dh1 if h1 is None else int(h1)
    h2 = dh2 if h2 is None else int(h2)
    if min(d, h1, h2, o) < 1:
        raise UsageError("d, h1, h2 and o must all be >= 1")
    init = init or InitSpec()
    rng = make_rng(init.seed)
    if init.scheme == "kaiming_uniform":
        W1 = kaiming_uniform(rng, h1, d + 1)
    elif init.scheme == "gaussian_mixture":
        W1 = gaussian_mixture(rng, (h1, d + 1))
    else:
        raise UsageError(f"unknown init scheme {init.scheme!r}")
    W2 = kaiming_uniform(rng, h2, h1)
    W3 = kaiming_uniform(rng, o, h2)
    f1, f2, _ = FROZEN[function_class]
    if f1:
        W1, _ = normalize_rows(W1)
    if f2:
        W2, _ = normalize_rows(W2)
    return MeasureNet(W1, W2, W3, act1, act2, function_class,
                      DEFAULT_AUG if aug is None else float(aug))


def share_first_layer(net, source):
    """Copy ``source``'s first layer into ``net`` (in place) and return ``net``.

    When W1 is frozen its rows are renormalised; the original row norms are
    kept in ``net.first_layer_scale``. Since the activations are positively
    homogeneous, the trainable second layer can absorb that scale, so a
    network built on ``source``'s first layer stays representable.
    """
    if net.W1.shape != source.W1.shape:
        raise DimensionError(f"first layer shapes differ: {net.W1.shape} vs {source.W1.shape}")
    W1 = np.array(source.W1, dtype=np.float64)
    if net.frozen[0]:
        W1, scale = normalize_rows(W1)
        net.first_layer_scale = scale
    net.W1 = W1
    net.touch()
    return net


# --- forward / backward -----------------------------------------------------


def augment(points, aug):
    points = np.asarray(points, dtype=np.float64)
    return np.hstack([points, np.full((points.shape[0], 1), aug)])


@dataclass
class ForwardCache:
    version: int
    net_id: int
    sizes: np.ndarray
    x_aug: Optional[np.ndarray]
    z1: Optional[np.ndarray]
    pooled: np.ndarray
    z2: Optional[np.ndarray]
    a2: np.ndarray
    out: np.ndarray


def _as_batch(x):
    if isinstance(x, SetBatch):
        return x
    return SetBatch.from_sets([x]) if np.ndim(x) == 2 else SetBatch.from_sets(list(x))


def pool_features(net, batch, x_aug=None):
    """Pooled first-layer features (``len(batch) x h1``) plus intermediates.

    ``x_aug`` may carry the already augmented points of ``batch``.
    """
    if batch.d != net.d:
        raise DimensionError(f"points have dimension {batch.d}, network expects {net.d}")
    if x_aug is None:
        x_aug = augment(batch.points, net.aug)
    z1 = x_aug @ net.W1.T
    a1 = activation(z1, net.act1)
    uniform = batch.uniform_size
    if uniform is not None:
        pooled = a1.reshape(len(batch), uniform, net.h1).sum(axis=1)
    else:
        pooled = np.add.reduceat(a1, batch.offsets[:-1], axis=0)
    if net.normalized:
        pooled /= batch.sizes[:, None]
    return pooled, x_aug, z1


def forward_batch(net, batch, pooled=None, features=None, x_aug=None):
    """Outputs for every set of ``batch`` (``len(batch) x o``) and a cache.

    ``pooled`` / ``features`` let callers reuse first- or second-layer
    activations that cannot change because the layers producing them are
    frozen.
    """
    x_aug = z1 = z2 = None
    if features is None:
        if pooled is None:
            pooled, x_aug, z1 = pool_features(net, batch, x_aug)
        z2 = pooled @ net.W2.T
        features = activation(z2, net.act2)
    out = features @ net.W3.T
    cache = ForwardCache(net.version, id(net), batch.sizes, x_aug, z1, pooled, z2, features, out)
    return out, cache


def forward(net, points):
    """Output vector (length o) for one set of N points, plus the cache."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] == 0:
        raise UsageError("cannot evaluate the network on an empty set")
    out, cache = forward_batch(net, SetBatch(points, [points.shape[0]]))
    return out[0], cache


def predict(net, x):
    """Outputs for a set (2-D array), a list of sets, or a SetBatch."""
    out, _ = forward_batch(net, _as_batch(x))
    return out


def _through_activation(g, z, kind):
    """``g * act'(z)`` with ``g`` broadcast against ``z``."""
    # a float mask times g is several times faster than np.where with broadcasting
    return activation_derivative(z, kind) * g


def backward(net, cache, upstream):
    """Gradients of a scalar loss w.r.t. the trainable layers.

    ``upstream`` is dL/d(out), shaped like the forward output. Frozen
    layers are absent from the returned dict.
    """
    if cache.version != net.version or cache.net_id != id(net):
        raise UsageError("stale cache: the network changed since the forward pass")
    g_out = np.asarray(upstream, dtype=np.float64).reshape(cache.out.shape)
    f1, f2, _ = net.frozen
    grads = {"W3": g_out.T @ cache.a2}
    if f1 and f2:
        return grads
    if cache.z2 is None:
        raise UsageError("cache lacks second-layer pre-activations needed for this class")
    g_z2 = _through_activation(g_out @ net.W3, cache.z2, net.act2)
    if not f2:
        grads["W2"] = g_z2.T @ cache.pooled
    if f1:
        return grads
    if cache.z1 is None:
        raise UsageError("cache lacks first-layer pre-activations needed for this class")
    g_pooled = g_z2 @ net.W2
    if net.normalized:
        g_pooled = g_pooled / cache.sizes[:, None]
    n = cache.sizes[0]
    if np.all(cache.sizes == n):
        z1 = cache.z1.reshape(len(cache.sizes), n, -1)
        g_z1 = _through_activation(g_pooled[:, None, :], z1, net.act1).reshape(cache.z1.shape)
    else:
        g_z1 = _through_activation(np.repeat(g_pooled, cache.sizes, axis=0), cache.z1, net.act1)
    grads["W1"] = g_z1.T @ cache.x_aug
    return grads


# --- path norms -------------------------------------------------------------


def path_norm(net):
    """Class-specific path norm, summed over output rows.

    S1 (and unnormalized DeepSets): ``|W3| |W2| K(W1)``; S2: ``|W3| K(W2)``;
    S3: ``||W3||_2`` per row. ``K`` is the vector of row-wise squared norms.
    """
    A3 = np.abs(net.W3)
    if net.function_class == "S3":
        return float(np.sqrt(row_sq_norms(net.W3)).sum())
    if net.function_class == "S2":
        return float((A3 @ row_sq_norms(net.W2)).sum())
    return float((A3 @ (np.abs(net.W2) @ row_sq_norms(net.W1))).sum())


def path_norm_gradient(net):
    """Subgradient of :func:`path_norm` for the trainable layers (sign(0) = 0)."""
    grads = {}
    if net.function_class == "S3":
        norms = np.sqrt(row_sq_norms(net.W3))
        safe = np.where(norms > 0, norms, 1.0)
        grads["W3"] = np.where(norms[:, None] > 0, net.W3 / safe[:, None], 0.0)
        return grads
    s3 = np.sign(net.W3)
    col3 = np.abs(net.W3).sum(axis=0)  # total |W3| mass on each second-layer unit
    if net.function_class == "S2":
        grads["W3"] = s3 * row_sq_norms(net.W2)[None, :]
        grads["W2"] = 2.0 * col3[:, None] * net.W2
        return grads
    k1 = row_sq_norms(net.W1)
    grads["W3"] = s3 * (np.abs(net.W2) @ k1)[None, :]
    grads["W2"] = col3[:, None] * np.sign(net.W2) * k1[None, :]
    grads["W1"] = 2.0 * (col3 @ np.abs(net.W2))[:, None] * net.W1
    return grads


# --- checkpoints ------------------------------------------------------------

MAGIC = "MEASURENET/1"


def save_checkpoint(net, path):
    """Text checkpoint: magic line, header fields, then row-major weights."""
    lines = [MAGIC,
             f"class {net.function_class}",
             f"act {net.act1} {net.act2}",
             f"aug {net.aug!r}"]
    for name in LAYERS:
        w = getattr(net, name)
        lines.append(f"{name} {w.shape[0]} {w.shape[1]}")
        lines.append(" ".join(format(v, ".17g") for v in w.ravel()))
    if net.first_layer_scale is not None:
        lines.append(f"scale {len(net.first_layer_scale)}")
        lines.append(" ".join(format(v, ".17g") for v in net.first_layer_scale))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise UsageError(f"{path}: not a {MAGIC} checkpoint")
    try:
        function_class = lines[1].split()[1]
        _, act1, act2 = lines[2].split()
        aug = float(lines[3].split()[1])
        weights, pos = {}, 4
        for name in LAYERS:
            tag, r, c = lines[pos].split()
            if tag != name:
                raise ValueError(f"expected {name}, found {tag}")
            data = np.array(lines[pos + 1].split(), dtype=np.float64)
            weights[name] = data.reshape(int(r), int(c))
            pos += 2
        scale = None
        if pos < len(lines) and lines[pos].startswith("scale"):
            scale = np.array(lines[pos + 1].split(), dtype=np.float64)
    except (IndexError, ValueError) as exc:
        raise UsageError(f"{path}: corrupt checkpoint ({exc})") from None
    return MeasureNet(weights["W1"], weights["W2"], weights["W3"], act1, act2, function_class, aug, scale)
