"""Cross-entropy, the exponential boundary penalty and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError
from .numeric import log_softmax


@dataclass
class LossBreakdown:
    ce: float
    boundary_per_layer: list
    lam: float
    total: float

    @property
    def boundary_weighted(self) -> float:
        return self.lam * float(sum(self.boundary_per_layer))


def cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise DataError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -float(np.mean(logp[rows, labels]))
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return loss, grad / n


def boundary_loss(preact, bound: float, alpha: float):
    """Mean of ``exp(max(|x| - alpha*bound, 0)) - 1`` over every element.

    Overflow is not masked: a preactivation far outside the threshold yields
    ``inf``, which the training loop treats as divergence.
    """
    if not bound > 0:
        raise ParameterError(f"bound must be positive, got {bound}")
    if not 0 < alpha <= 1:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")
    x = np.asarray(preact, dtype=np.float64)
    excess = np.abs(x) - alpha * bound
    outside = excess > 0
    with np.errstate(over="ignore"):
        clamped = np.maximum(excess, 0.0)
        loss = float(np.sum(np.expm1(clamped)) / x.size)
        grad = np.where(outside, np.sign(x) * np.exp(clamped) / x.size, 0.0)
    return loss, grad


def composite_loss(ce: float, boundary, lam: float) -> float:
    if lam < 0:
        raise ParameterError(f"lambda must be non-negative, got {lam}")
    return ce + lam * float(sum(boundary))
