"""Input validation helpers shared by the modules and estimators."""

from __future__ import annotations

import numbers

import numpy as np


def check_adapted(tree, v, d: int | None = None, name: str = "process") -> np.ndarray:
    """Coerce ``v`` to an adapted ``(n_nodes, d)`` float array."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2 or v.shape[0] != tree.n_nodes:
        raise ValueError(f"{name} must have shape (n_nodes, d) = ({tree.n_nodes}, d), got {v.shape}")
    if d is not None and v.shape[1] != d:
        raise ValueError(f"{name} must have {d} coordinates, got {v.shape[1]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def check_raw(tree, v, name: str = "raw process") -> np.ndarray:
    """Coerce ``v`` to a raw ``(n_leaves, N+1, d)`` float array."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 2:
        v = v[:, :, None]
    shape = (tree.n_leaves, tree.horizon + 1)
    if v.ndim != 3 or v.shape[:2] != shape:
        raise ValueError(f"{name} must have shape {shape + ('d',)}, got {v.shape}")
    return v


def check_leafwise(tree, v, d: int | None = None, name: str = "leaf variable") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2 or v.shape[0] != tree.n_leaves:
        raise ValueError(f"{name} must have shape (n_leaves, d), got {v.shape}")
    if d is not None and v.shape[1] != d:
        raise ValueError(f"{name} must have {d} coordinates")
    return v


def check_scalar(x, name: str, *, positive: bool = False, nonnegative: bool = False) -> float:
    if not isinstance(x, numbers.Real) or not np.isfinite(x):
        raise ValueError(f"{name} must be a finite real number")
    if positive and x <= 0:
        raise ValueError(f"{name} must be positive")
    if nonnegative and x < 0:
        raise ValueError(f"{name} must be nonnegative")
    return float(x)


def check_square(m, d: int, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape != (d, d):
        raise ValueError(f"{name} must be a {d}x{d} matrix")
    return m


def check_probability_vector(w, name: str = "weights") -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"{name} must be a probability vector")
    return w
