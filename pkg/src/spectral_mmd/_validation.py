"""Input validation helpers shared by the public functions and estimators."""

from __future__ import annotations

import numpy as np


def check_matrix(a, name: str = "X", min_rows: int = 1) -> np.ndarray:
    """Return ``a`` as a finite 2-D float array.

    1-D input is treated as a single column (``n`` observations, ``d = 1``).
    """
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D (n x d), got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise ValueError(f"{name} has no columns")
    if arr.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_same_dim(a: np.ndarray, b: np.ndarray, name_a: str = "X", name_b: str = "Y"):
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"dimension mismatch: {name_a} has d={a.shape[1]}, {name_b} has d={b.shape[1]}"
        )


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_level(alpha, name: str = "alpha") -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {alpha}")
    return alpha
