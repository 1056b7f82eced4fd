"""Differentiable similarity geometry: cosine similarity, angular distance, and
their analytic gradients.

Angular distance arccos(C)/pi is preferred over raw cosine similarity as a
training metric because its gradient keeps a constant magnitude as two vectors
align, while the cosine gradient vanishes. ``angular_gradient`` makes that
amplification explicit: it rescales the cosine gradient by 1/(pi*sqrt(1-C^2)).

All functions are pure and operate on 1-D float vectors; batched helpers for
distance matrices live at the bottom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolationError, DegenerateVectorError

# Clamp |C| to 1 - SINGULARITY_EPS inside angular_gradient: the 1/sqrt(1-C^2)
# scale is singular at |C| = 1, and bounded gradients keep training stable when
# a positive pair becomes nearly collinear.
SINGULARITY_EPS = 1e-7


def _clamp(x: float, lo: float, hi: float) -> float:
    # Comparison-based so NaN passes through instead of being masked to a
    # bound; non-finite values must surface at the training loop's loss check.
    if x > hi:
        return hi
    if x < lo:
        return lo
    return x


def _as_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ContractViolationError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    return v


def _checked_pair(u, v) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Validated vectors plus their squared norms.

    Norms are combined as sqrt(|u|^2 * |v|^2) downstream (one rounding instead
    of three), which keeps exactly-proportional inputs at cosine exactly 1.
    """
    uv = _as_vector(u, "u")
    vv = _as_vector(v, "v")
    if uv.shape != vv.shape:
        raise ContractViolationError(f"dimension mismatch: {uv.shape[0]} vs {vv.shape[0]}")
    sq_u = float(np.dot(uv, uv))
    sq_v = float(np.dot(vv, vv))
    if sq_u == 0.0 or sq_v == 0.0:
        raise DegenerateVectorError("zero-norm vector in cosine/angular computation")
    return uv, vv, sq_u, sq_v


def cosine_similarity(u, v) -> float:
    """Cosine similarity u.v / (|u||v|), clamped into [-1, 1].

    The clamp absorbs floating-point overshoot (the raw quotient can exceed 1
    by ~1e-16 for near-collinear vectors, which would poison arccos).

    Raises:
        DegenerateVectorError: if either vector has zero norm.
    """
    uv, vv, sq_u, sq_v = _checked_pair(u, v)
    c = float(np.dot(uv, vv)) / math.sqrt(sq_u * sq_v)
    return _clamp(c, -1.0, 1.0)


def angular_distance(u, v) -> float:
    """Angular distance arccos(cosine_similarity(u, v)) / pi, in [0, 1].

    0 means identical direction, 1 opposite direction; invariant under
    positive rescaling of either argument.
    """
    return math.acos(cosine_similarity(u, v)) / math.pi


def cosine_gradient(u, v) -> np.ndarray:
    """Gradient of ``cosine_similarity`` with respect to its first argument.

    dC/du = v/(|u||v|) - C(u,v) * u/|u|^2; the gradient with respect to v
    follows by symmetry (swap the arguments).
    """
    uv, vv, sq_u, sq_v = _checked_pair(u, v)
    norms = math.sqrt(sq_u * sq_v)
    c = _clamp(float(np.dot(uv, vv)) / norms, -1.0, 1.0)
    return vv / norms - c * uv / sq_u


def angular_gradient(u, v) -> np.ndarray:
    """Gradient of ``angular_distance`` with respect to its first argument.

    d d(u,v)/du = -1/(pi*sqrt(1-C^2)) * dC/du. Only the C inside the square
    root is clamped to |C| <= 1 - SINGULARITY_EPS, so collinear inputs yield a
    finite (indeed zero) vector instead of blowing up, while dC/du itself is
    untouched.
    """
    c = _clamp(cosine_similarity(u, v), -1.0 + SINGULARITY_EPS, 1.0 - SINGULARITY_EPS)
    scale = -1.0 / (math.pi * math.sqrt(1.0 - c * c))
    return scale * cosine_gradient(u, v)


def half_cosine_distance(u, v) -> float:
    """(1 - cosine_similarity) / 2: a [0, 1]-ranged substitute distance.

    Used by the ablation variant that drops angular distance in favor of a
    cosine-derived metric; the /2 keeps margins comparable across metrics.
    """
    return (1.0 - cosine_similarity(u, v)) / 2.0


def half_cosine_gradient(u, v) -> np.ndarray:
    """Gradient of ``half_cosine_distance`` with respect to its first argument."""
    return -0.5 * cosine_gradient(u, v)


@dataclass(frozen=True)
class DistanceMetric:
    """A [0, 1]-ranged dissimilarity with its analytic gradient.

    ``grad`` differentiates with respect to the first argument; the gradient
    with respect to the second follows by swapping arguments (both metrics
    here are symmetric).
    """

    name: str
    dist: Callable[[np.ndarray, np.ndarray], float] = field(repr=False)
    grad: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)

    def pairwise(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        if self.name == "angular":
            return pairwise_angular(rows, cols)
        return (1.0 - pairwise_cosine(rows, cols)) / 2.0


ANGULAR = DistanceMetric("angular", angular_distance, angular_gradient)
HALF_COSINE = DistanceMetric("half_cosine", half_cosine_distance, half_cosine_gradient)


def pairwise_cosine(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Cosine similarity between every row of ``rows`` and every row of ``cols``.

    Returns an (n, m) matrix clamped into [-1, 1].

    Raises:
        DegenerateVectorError: if any row of either input has zero norm.
    """
    a = np.asarray(rows, dtype=np.float64)
    b = np.asarray(cols, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ContractViolationError(f"expected (n, d) and (m, d) matrices, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise DegenerateVectorError("zero-norm row in pairwise cosine computation")
    sims = (a / na[:, None]) @ (b / nb[:, None]).T
    return np.clip(sims, -1.0, 1.0)


def pairwise_angular(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Angular distance between every row of ``rows`` and every row of ``cols``."""
    return np.arccos(pairwise_cosine(rows, cols)) / math.pi
