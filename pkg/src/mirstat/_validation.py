"""Input checks shared by the public functions and estimators."""

from __future__ import annotations

import numpy as np


def check_series(x, min_length=2, name="x"):
    """Return ``x`` as a finite 1-D float array.

    Accepts sequences, 1-D arrays, column vectors of shape (N, 1) and
    objects with a ``values`` attribute (pandas Series, SeriesSample).
    """
    if hasattr(x, "values") and not isinstance(x, np.ndarray):
        x = x.values
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise ValueError(f"{name} needs at least {min_length} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"{name} contains a non-finite value at index {bad}")
    return arr


def check_level(level):
    level = float(level)
    if not 0.0 < level < 0.5:
        raise ValueError(f"level must lie in (0, 0.5), got {level}")
    return level
