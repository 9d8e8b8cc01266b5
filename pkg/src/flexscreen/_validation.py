"""Input validation helpers shared by the estimator surface."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_types(X, sorted_: bool = True) -> np.ndarray:
    """Coerce ``X`` (shape ``(m,)`` or ``(m, 1)``) into a 1-D float array of types.

    With ``sorted_`` the types must be strictly increasing, as for a type grid.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    arr = check_array(arr, ensure_2d=True, dtype=float)
    if arr.shape[1] != 1:
        raise ValueError(f"types must be a single column, got shape {arr.shape}")
    theta = arr[:, 0]
    if np.any((theta <= 0) | (theta >= 1)):
        raise ValueError("types must lie strictly inside (0, 1)")
    if sorted_ and np.any(np.diff(theta) <= 0):
        raise ValueError("types must be strictly increasing")
    return theta
