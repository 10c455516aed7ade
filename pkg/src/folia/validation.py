"""Input validation helpers shared by the public entry points."""

import numpy as np


def as_point_batch(x, n):
    """Coerce ``x`` to a float array of shape (m, 2n).

    A single point (1-d array of length 2n) becomes a one-row batch.
    Returns ``(batch, single)`` where ``single`` tells the caller to
    unwrap the result again.
    """
    a = np.asarray(x, dtype=float)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != 2 * n:
        raise ValueError(
            f"expected points with {2 * n} real coordinates, got shape {np.asarray(x).shape}"
        )
    if not np.all(np.isfinite(a)):
        raise ValueError("points contain non-finite coordinates")
    return a, single


def as_point(x, n):
    """Coerce ``x`` to a single float point of shape (2n,)."""
    a = np.asarray(x, dtype=float)
    if a.shape != (2 * n,):
        raise ValueError(f"expected a point of length {2 * n}, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("point contains non-finite coordinates")
    return a


def check_index(l, n):
    """Validate a 1-based complex coordinate index."""
    if not isinstance(l, (int, np.integer)) or isinstance(l, bool):
        raise TypeError(f"coordinate index must be an integer, got {type(l).__name__}")
    if not 1 <= l <= n:
        raise IndexError(f"coordinate index {l} out of range 1..{n}")
    return int(l)
