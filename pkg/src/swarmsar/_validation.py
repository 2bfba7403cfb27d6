"""Input checking shared by the estimators and planners."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_positions(positions, name="positions", allow_empty=False) -> np.ndarray:
    """Return ``positions`` as a float array of shape (n, 2)."""
    arr = np.asarray(positions, dtype=float)
    if arr.size == 0:
        if allow_empty:
            return arr.reshape(0, 2)
        raise ValueError(f"{name} must contain at least one point")
    arr = check_array(arr, ensure_2d=True, dtype=float, input_name=name)
    if arr.shape[1] != 2:
        raise ValueError(f"{name} must have shape (n, 2), got {arr.shape}")
    return arr


def check_point_ids(point_ids, n_points: int) -> np.ndarray:
    if point_ids is None:
        return np.arange(n_points)
    ids = np.asarray(point_ids)
    if ids.shape != (n_points,):
        raise ValueError(f"point_ids must have length {n_points}, got shape {ids.shape}")
    if len(set(ids.tolist())) != n_points:
        raise ValueError("point_ids must be unique")
    return ids.astype(int)


def check_non_negative(value, name):
    if not value >= 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return value
