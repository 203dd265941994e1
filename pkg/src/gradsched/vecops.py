"""Flat dense vector arithmetic for parameter-sized state.

Weights, velocities and gradients are all 1-D float64 arrays of a fixed
length. Every combining op validates lengths up front; silent broadcasting
is exactly the bug class these helpers exist to rule out.
"""

import numpy as np


def as_vector(values) -> np.ndarray:
    """Coerce to a fresh 1-D float64 array (always copies)."""
    v = np.array(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def zeros_like(x: np.ndarray) -> np.ndarray:
    return np.zeros(x.shape[0], dtype=np.float64)


def _check_lengths(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValueError(
            f"vector length mismatch: {x.shape[0]} vs {y.shape[0]}"
        )


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """a*x + y, returned as a new vector. Inputs are never mutated."""
    _check_lengths(x, y)
    if not np.isfinite(a):
        raise ValueError(f"scalar must be finite, got {a!r}")
    return a * x + y


def scale(a: float, x: np.ndarray) -> np.ndarray:
    if not np.isfinite(a):
        raise ValueError(f"scalar must be finite, got {a!r}")
    return a * x


def l2_norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))
