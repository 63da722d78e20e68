"""Dense linear algebra helpers, activations and seeded random streams.

Matrices are plain 2-D ``float64`` numpy arrays. Random streams are numpy
``Generator`` objects backed by PCG64; normal draws use numpy's ziggurat
transform, which is deterministic for a given bit stream, so a seed pins
every draw.
"""

import hashlib

import numpy as np

from .exceptions import DimensionError, UsageError

ACTIVATIONS = ("relu", "relu2")


def as_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a, b):
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def row_sq_norms(a):
    """Vector of row-wise squared Euclidean norms."""
    a = as_matrix(a)
    return np.einsum("ij,ij->i", a, a)


def _check_kind(kind):
    if kind not in ACTIVATIONS:
        raise UsageError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation(x, kind="relu"):
    _check_kind(kind)
    r = np.maximum(x, 0.0)
    if kind == "relu2":
        return r * r
    return r


def activation_derivative(x, kind="relu"):
    # subderivative at exactly 0 is 0 for both kinds
    _check_kind(kind)
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu2":
        return 2.0 * np.maximum(x, 0.0)
    return (x > 0).astype(np.float64)


def _key_words(key):
    digest = hashlib.blake2b(repr(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed):
    """Seeded generator; ``seed`` may be an int or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def derive_seed(base_seed, *keys):
    """Stable 63-bit seed derived from a base seed and a tuple of labels.

    Labels are hashed through their ``repr`` so the result does not depend on
    Python's per-process string hashing.
    """
    words = [_key_words(k) for k in keys]
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(words))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def derive_rng(base_seed, *keys):
    return make_rng(derive_seed(base_seed, *keys))
