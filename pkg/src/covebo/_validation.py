"""Input validation helpers shared by the estimators and the functional API."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array


def check_objective_values(values, *, allow_empty=False, name="objective matrix"):
    """Return ``values`` as a C-contiguous float64 2-D array with finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1 and arr.size and not allow_empty:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise ValueError(f"{name} needs at least one objective column")
    if arr.shape[0] == 0:
        if not allow_empty:
            raise ValueError(f"{name} has no rows")
        return np.ascontiguousarray(arr)
    return check_array(arr, dtype=np.float64, order="C", input_name=name)


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got {value}")
    return int(value)


def check_unit_cube(points, *, d=None, name="points", atol=1e-12):
    """Validate a (m, d) array of points inside [0, 1]^d."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"{name} has {arr.shape[1]} columns, expected {d}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < -atol or arr.max() > 1 + atol):
        bad = int(np.flatnonzero(((arr < -atol) | (arr > 1 + atol)).any(axis=1))[0])
        raise ValueError(f"{name}[{bad}] lies outside the unit hypercube")
    return arr


def as_generator(seed):
    """Coerce ``None``/int/seed-sequence/Generator into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
