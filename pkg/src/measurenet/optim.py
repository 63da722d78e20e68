"""Adam and the path-norm regularised training loop."""

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import TrainingError, UsageError
from .model import augment, backward, forward_batch, path_norm, path_norm_gradient, pool_features
from .numerics import activation, make_rng

DIVERGENCE_LIMIT = 1e12


class Adam:
    """Adam with bias correction; parameters are updated in place."""

    def __init__(self, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for {name} at step {self.t + 1}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if p.shape != g.shape:
                raise UsageError(f"gradient shape {g.shape} does not match {name} {p.shape}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``batch`` is the number of sets in the fixed training sample. A positive
    ``minibatch`` switches to stochastic steps on that many sets drawn (with
    the ``seed`` stream) from the sample each iteration.
    """

    iterations: int = 5000
    lr: float = 5e-4
    lam: float = 0.0
    batch: int = 100
    loss: str = "mse"
    seed: int = 0
    minibatch: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.batch < 1 or self.minibatch < 0:
            raise UsageError("iterations >= 0, batch >= 1 and minibatch >= 0 are required")
        if self.lr <= 0 or self.lam < 0:
            raise UsageError("lr must be positive and lambda non-negative")
        if self.loss not in ("mse", "cross_entropy"):
            raise UsageError(f"unknown loss {self.loss!r}")


ROBUST_TRAIN = dict(iterations=30000, batch=5000)


def data_loss(out, y, loss):
    """Loss value and its gradient with respect to ``out``."""
    if loss == "mse":
        y = np.asarray(y, dtype=np.float64).reshape(out.shape)
        r = out - y
        return float(np.mean(r * r)), 2.0 * r / r.size
    labels = np.asarray(y, dtype=np.int64).reshape(-1)
    shifted = out - out.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logz[:, None]
    rows = np.arange(len(labels))
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(-logp[rows, labels].mean()), grad / len(labels)


def objective(net, batch, y, lam=0.0, loss="mse"):
    """(data loss, penalty) evaluated directly through the forward pass."""
    out, _ = forward_batch(net, batch)
    value, _ = data_loss(out, y, loss)
    return value, lam * path_norm(net)


class _FrozenFeatures:
    """Activations of the fixed training sample that frozen layers pin down."""

    def __init__(self, net, batch):
        f1, f2, _ = net.frozen
        self.pooled = self.features = None
        if f1:
            self.pooled, _, _ = pool_features(net, batch)
            if f2:
                self.features = activation(self.pooled @ net.W2.T, net.act2)

    def take(self, index):
        pick = (lambda a: a if a is None or index is None else a[index])
        return pick(self.pooled), pick(self.features)


def train(net, batch, y, cfg, callback=None):
    """Minimise mean data loss + ``cfg.lam * path_norm(net)`` with Adam.

    Only trainable layers move; frozen layers are never written. Returns
    ``(net, history)`` where history rows are ``(iteration, data_loss,
    penalty, total)`` measured before that iteration's update.
    """
    y = np.asarray(y)
    if len(y) != len(batch):
        raise UsageError("need exactly one target per training set")
    opt = Adam(lr=cfg.lr)
    params = net.parameters()
    frozen = _FrozenFeatures(net, batch)
    rng = make_rng(cfg.seed) if cfg.minibatch else None
    # the augmented training points never change, so build them once
    x_aug = augment(batch.points, net.aug) if frozen.pooled is None and rng is None else None
    history = np.empty((cfg.iterations, 4))
    for it in range(cfg.iterations):
        if rng is not None:
            index = np.sort(rng.choice(len(batch), size=min(cfg.minibatch, len(batch)), replace=False))
            sub, y_sub = batch.subset(index), y[index]
        else:
            index, sub, y_sub = None, batch, y
        pooled, features = frozen.take(index)
        out, cache = forward_batch(net, sub, pooled=pooled, features=features, x_aug=x_aug)
        value, g_out = data_loss(out, y_sub, cfg.loss)
        grads = backward(net, cache, g_out)
        penalty = 0.0
        if cfg.lam > 0:
            penalty = cfg.lam * path_norm(net)
            for name, g in path_norm_gradient(net).items():
                grads[name] += cfg.lam * g
        total = value + penalty
        history[it] = (it, value, penalty, total)
        if not np.isfinite(total) or total > DIVERGENCE_LIMIT:
            raise TrainingError(f"loss diverged at iteration {it}: {total!r}")
        opt.step(params, grads)
        net.touch()
        if callback is not None:
            callback(it, net, history[it])
    return net, history


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "data_loss", "penalty", "total"])
        for it, dl, pen, tot in history:
            w.writerow([int(it), format(dl, ".17g"), format(pen, ".17g"), format(tot, ".17g")])


def smoothed(values, window=100):
    """Trailing moving average (shorter windows at the start)."""
    values = np.asarray(values, dtype=np.float64)
    c = np.cumsum(np.concatenate(([0.0], values)))
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)

