"""Shared numeric test utilities: central finite differences and error norms."""

from __future__ import annotations

import numpy as np


def central_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function at x, one axis at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        hi = f(x)
        xf[i] = orig - h
        lo = f(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2.0 * h)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """Norm-wise relative disagreement between two same-shape arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b)) / denom


def random_unit_pair(rng: np.random.Generator, dim: int = 8, max_abs_cos: float = 0.99):
    """Two standard-normal vectors, resampled until |cosine| stays off the poles."""
    while True:
        u = rng.standard_normal(dim)
        v = rng.standard_normal(dim)
        c = float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))
        if abs(c) <= max_abs_cos:
            return u, v


def vector_at_angular_distance(distance: float, dim: int = 2) -> np.ndarray:
    """Unit vector whose angular distance from e0 is exactly the given value."""
    theta = distance * np.pi
    v = np.zeros(dim)
    v[0] = np.cos(theta)
    v[1] = np.sin(theta)
    return v
