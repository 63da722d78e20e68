"""Input validation for set-valued data.

Set inputs may be given as a :class:`SetBatch`, a ``(count, N, d)`` array,
or a sequence of ``(N_i, d)`` arrays (1-D sequences are read as sets of
scalars).
"""

import numpy as np

from .data import SetBatch
from .exceptions import DimensionError, UsageError


def check_sets(X, d=None, allow_nonfinite=False):
    """Coerce ``X`` to a :class:`SetBatch` and validate it."""
    if isinstance(X, SetBatch):
        batch = X
    elif isinstance(X, np.ndarray) and X.ndim == 3:
        batch = SetBatch.from_array(X)
    else:
        try:
            sets = list(X)
        except TypeError:
            raise UsageError(f"cannot interpret {type(X).__name__} as a collection of sets") from None
        if not sets:
            raise UsageError("no sets given")
        cooked = []
        for s in sets:
            s = np.asarray(s, dtype=np.float64)
            if s.ndim == 1:
                s = s[:, None]
            if s.ndim != 2 or s.shape[0] == 0:
                raise UsageError("every set must be a non-empty (N, d) array")
            cooked.append(s)
        batch = SetBatch.from_sets(cooked)
    if not allow_nonfinite and not np.all(np.isfinite(batch.points)):
        raise UsageError("sets contain NaN or infinite coordinates")
    if d is not None and batch.d != d:
        raise DimensionError(f"sets have dimension {batch.d}, expected {d}")
    return batch


def check_targets(y, count):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != count:
        raise DimensionError(f"expected {count} targets, got array of shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise UsageError("targets contain NaN or infinite values")
    return y
