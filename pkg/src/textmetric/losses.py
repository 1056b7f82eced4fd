"""Training objectives: margin triplet loss over a distance metric, hinge pair
losses, masked-token cross-entropy, and their weighted combination.

Each objective comes in two flavors: a plain value function matching the math,
and a ``*_with_grads`` variant returning analytic gradients for the manual
backward pass. Gradients use the convention that an inactive hinge contributes
exactly zero (the hinge is active iff its argument is strictly positive).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError
from .geometry import ANGULAR, DistanceMetric

DEFAULT_MARGIN = 0.1


@dataclass(frozen=True)
class TripletLossConfig:
    """Margin for the triplet hinge, in angular-distance units (so in [0, 1])."""

    margin: float = DEFAULT_MARGIN

    def __post_init__(self) -> None:
        if not 0.0 <= self.margin <= 1.0:
            raise ContractViolationError(f"margin must be in [0, 1], got {self.margin}")


@dataclass(frozen=True)
class PairLossConfig:
    """Positive and negative margins for the hinge pair loss, in cosine units.

    (m_pos=1, m_neg=0) gives the contrastive configuration, (m_pos=1, m_neg=-1)
    the cosine configuration; the two differ only in when the negative hinge
    disengages, so they produce identical gradients while every negative
    similarity stays positive.
    """

    m_pos: float
    m_neg: float

    def __post_init__(self) -> None:
        for name, value in (("m_pos", self.m_pos), ("m_neg", self.m_neg)):
            if not -1.0 <= value <= 1.0:
                raise ContractViolationError(f"{name} must be in [-1, 1], got {value}")
        if self.m_pos <= self.m_neg:
            raise ContractViolationError(
                f"m_pos must exceed m_neg, got m_pos={self.m_pos}, m_neg={self.m_neg}"
            )


CONTRASTIVE_PAIR_CONFIG = PairLossConfig(m_pos=1.0, m_neg=0.0)
COSINE_PAIR_CONFIG = PairLossConfig(m_pos=1.0, m_neg=-1.0)


@dataclass(frozen=True)
class LossBreakdown:
    """Per-step loss components: total = mlm + lambda_ * metric."""

    mlm: float
    metric: float
    total: float
    lambda_: float


def _hinge(x: float) -> float:
    # max(0, x) written so NaN propagates instead of being masked to 0.
    return 0.0 if x <= 0.0 else x


def triplet_loss(a, p, n, cfg: TripletLossConfig, metric: DistanceMetric = ANGULAR) -> float:
    """max(0, margin + d(a, p) - d(a, n)) for anchor, positive, negative."""
    return _hinge(cfg.margin + metric.dist(a, p) - metric.dist(a, n))


def triplet_loss_with_grads(
    a, p, n, cfg: TripletLossConfig, metric: DistanceMetric = ANGULAR
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Triplet loss plus gradients with respect to each embedding.

    When the hinge is inactive the loss and all three gradients are exactly
    zero; no tiny residual flows back.
    """
    a = np.asarray(a, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    hinge = cfg.margin + metric.dist(a, p) - metric.dist(a, n)
    if hinge <= 0.0:
        zero = np.zeros_like(a)
        return 0.0, zero, zero.copy(), zero.copy()
    grad_a = metric.grad(a, p) - metric.grad(a, n)
    grad_p = metric.grad(p, a)
    grad_n = -metric.grad(n, a)
    return hinge, grad_a, grad_p, grad_n


def pair_loss(s_p: float, s_n: float, cfg: PairLossConfig) -> float:
    """[m_pos - s_p]_+ + [s_n - m_neg]_+ over cosine similarities."""
    return _hinge(cfg.m_pos - s_p) + _hinge(s_n - cfg.m_neg)


def pair_loss_with_grads(s_p: float, s_n: float, cfg: PairLossConfig) -> tuple[float, float, float]:
    """Pair loss plus scalar gradients (dL/ds_p, dL/ds_n)."""
    loss = pair_loss(s_p, s_n, cfg)
    d_sp = -1.0 if cfg.m_pos - s_p > 0.0 else 0.0
    d_sn = 1.0 if s_n - cfg.m_neg > 0.0 else 0.0
    return loss, d_sp, d_sn


def mlm_loss(scores: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy over masked positions.

    ``scores`` holds one vocabulary-score row per masked position and is
    normalized row-wise with a softmax; ``targets`` holds the original token
    id at each position. Returns 0.0 when there are no masked positions.
    """
    return _mlm_loss_impl(scores, targets, want_grad=False)[0]


def mlm_loss_with_grad(scores: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """MLM loss plus its gradient with respect to the score rows."""
    return _mlm_loss_impl(scores, targets, want_grad=True)


def _mlm_loss_impl(scores, targets, want_grad: bool) -> tuple[float, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if scores.ndim != 2:
        scores = scores.reshape((0, 0)) if scores.size == 0 else scores
    if scores.shape[0] == 0:
        return 0.0, np.zeros_like(scores)
    if targets.ndim != 1 or targets.shape[0] != scores.shape[0]:
        raise ContractViolationError(
            f"expected one target per score row, got {targets.shape} targets for {scores.shape} scores"
        )
    if np.any(targets < 0) or np.any(targets >= scores.shape[1]):
        raise ContractViolationError("target id outside the vocabulary of the score rows")
    n = scores.shape[0]
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    picked = log_probs[np.arange(n), targets]
    loss = float(-picked.mean())
    if not want_grad:
        return loss, np.zeros_like(scores)
    grad = np.exp(log_probs)
    grad[np.arange(n), targets] -= 1.0
    grad /= n
    return loss, grad


def total_loss(mlm: float, metric: float, lambda_: float) -> LossBreakdown:
    """Combine the two heads: total = mlm + lambda_ * metric."""
    if mlm < 0.0 or metric < 0.0 or lambda_ < 0.0:
        raise ContractViolationError("loss components and lambda_ must be non-negative")
    return LossBreakdown(mlm=mlm, metric=metric, total=mlm + lambda_ * metric, lambda_=lambda_)
