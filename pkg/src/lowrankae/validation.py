"""Input validation helpers shared by the estimator-facing surfaces."""

from __future__ import annotations

import numpy as np

__all__ = ["check_image_matrix", "check_latent_matrix"]

_RANGE_SLACK = 1e-9


def check_image_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce to a float64 (n, d) matrix of finite values in [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    if x.min() < -1.0 - _RANGE_SLACK or x.max() > 1.0 + _RANGE_SLACK:
        raise ValueError(f"{name} values must lie in [-1, 1]")
    return x


def check_latent_matrix(z, dim: int | None = None, name: str = "Z") -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty 2-d array, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} contains non-finite values")
    if dim is not None and z.shape[1] != dim:
        raise ValueError(f"{name} has {z.shape[1]} columns, expected {dim}")
    return z
