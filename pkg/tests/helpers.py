"""Shared oracles for the test suite."""

import os

import numpy as np
from scipy.optimize import linear_sum_assignment

from measurenet.model import InitSpec, LAYERS, backward, forward_batch, init_model
from measurenet.data import SetBatch
from measurenet.optim import data_loss

DATA = os.path.join(os.path.dirname(__file__), "data")
MNIST_IMAGES = f"{DATA}/mnist5k-images-idx3-ubyte.gz"
MNIST_LABELS = f"{DATA}/mnist5k-labels-idx1-ubyte.gz"


def w1_assignment(a, b):
    """W1 between two empirical measures by optimal assignment.

    Both samples are replicated to lcm(P, Q) atoms of equal mass, which
    turns the transport problem into a square assignment problem.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    m = np.lcm(len(a), len(b))
    aa = np.repeat(a, m // len(a))
    bb = np.repeat(b, m // len(b))
    cost = np.abs(aa[:, None] - bb[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].sum() / m)


def random_case(rng, function_class, act1, act2):
    d = int(rng.integers(1, 5))
    h1, h2 = (int(v) for v in rng.integers(1, 6, size=2))
    o = int(rng.integers(1, 3))
    net = init_model(function_class, d, h1, h2, o, act1, act2, aug=1.0,
                     init=InitSpec("kaiming_uniform", int(rng.integers(2**31))))
    count = int(rng.integers(1, 4))
    sizes = rng.integers(1, 4, size=count)
    batch = SetBatch(rng.normal(size=(int(sizes.sum()), d)), sizes)
    y = rng.normal(size=(count, o))
    return net, batch, y


def loss_of(net, batch, y):
    out, _ = forward_batch(net, batch)
    return data_loss(out, y, "mse")[0]


def gradient_error(net, batch, y, step=1e-5):
    """Worst per-layer relative error (max-norm) between backward and central differences."""
    out, cache = forward_batch(net, batch)
    _, g_out = data_loss(out, y, "mse")
    grads = backward(net, cache, g_out)
    worst = 0.0
    for name in LAYERS:
        if name not in grads:
            continue
        w = getattr(net, name)
        num = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + step
            lp = loss_of(net, batch, y)
            w[idx] = old - step
            lm = loss_of(net, batch, y)
            w[idx] = old
            num[idx] = (lp - lm) / (2 * step)
        scale = max(np.abs(num).max(), np.abs(grads[name]).max(), 1e-8)
        worst = max(worst, float(np.abs(num - grads[name]).max() / scale))
    return worst
