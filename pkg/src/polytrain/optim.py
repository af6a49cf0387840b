"""AdamW with tag-based parameter groups, gradient clipping and LR schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, StateError
from .layers import Grad, Tag

POLY_LR_RATIO = 0.1


@dataclass
class ParamGroup:
    tag: Tag
    lr: float
    weight_decay: float


def make_groups(
    base_lr: float = 1e-3,
    weight_decay: float = 0.01,
    poly_lr_ratio: float = POLY_LR_RATIO,
) -> dict:
    """One group per tag. Polynomial coefficients train at ``poly_lr_ratio * base_lr``;
    only Standard parameters receive weight decay."""
    return {
        Tag.STANDARD: ParamGroup(Tag.STANDARD, base_lr, weight_decay),
        Tag.POLY: ParamGroup(Tag.POLY, base_lr * poly_lr_ratio, 0.0),
        Tag.BATCHNORM: ParamGroup(Tag.BATCHNORM, base_lr, 0.0),
    }


def global_norm(grads: dict, include_batchnorm: bool = False) -> float:
    total = 0.0
    for g in grads.values():
        if g.tag is Tag.BATCHNORM and not include_batchnorm:
            continue
        total += float(np.sum(g.value * g.value))
    return math.sqrt(total)


def _rescale(grads: dict, c: float, include_batchnorm: bool) -> dict:
    if not c > 0:
        raise ParameterError(f"clip threshold must be positive, got {c}")
    scale = 1.0 / max(1.0, global_norm(grads, include_batchnorm) / c)
    out = {}
    for name, g in grads.items():
        if g.tag is Tag.BATCHNORM and not include_batchnorm:
            out[name] = g
        else:
            out[name] = Grad(g.tag, g.value * scale)
    return out


def selective_clip(grads: dict, c: float) -> dict:
    """Rescale every non-BatchNorm gradient by ``1/max(1, n/c)``.

    ``n`` is the L2 norm over all non-BatchNorm gradients taken together.
    BatchNorm gradients are passed through untouched.
    """
    return _rescale(grads, c, include_batchnorm=False)


def clip_all(grads: dict, c: float) -> dict:
    """Plain global-norm clipping over every parameter, BatchNorm included."""
    return _rescale(grads, c, include_batchnorm=True)


@dataclass
class AdamWState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


class AdamW:
    def __init__(self, params: dict, groups: dict, betas=(0.9, 0.999), eps: float = 1e-8):
        missing = {p.tag for p in params.values()} - set(groups)
        if missing:
            raise ParameterError(f"no parameter group for tags {sorted(t.value for t in missing)}")
        self.params = params
        self.groups = groups
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.state = AdamWState(
            m={k: np.zeros_like(p.value) for k, p in params.items()},
            v={k: np.zeros_like(p.value) for k, p in params.items()},
        )

    def step(self, grads: dict) -> None:
        adamw_step(self.params, grads, self.state, self.groups, self.beta1, self.beta2, self.eps)

    def hyperparameters(self) -> dict:
        return {
            "betas": [self.beta1, self.beta2],
            "eps": self.eps,
            "groups": {t.value: {"lr": g.lr, "weight_decay": g.weight_decay} for t, g in self.groups.items()},
        }


def adamw_step(params, grads, state: AdamWState, groups, beta1=0.9, beta2=0.999, eps=1e-8):
    """One decoupled-weight-decay Adam update, applied in place.

    theta <- theta * (1 - lr*wd) - lr * mhat / (sqrt(vhat) + eps)
    """
    if set(grads) != set(params):
        raise StateError("gradients and parameters are not aligned")
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name].value
        if g.shape != p.value.shape:
            raise StateError(f"gradient for {name} has shape {g.shape}, parameter {p.value.shape}")
        group = groups[p.tag]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        if group.weight_decay:
            p.value *= 1.0 - group.lr * group.weight_decay
        p.value -= group.lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


class PlateauScheduler:
    """Multiply every group's LR by ``factor`` after ``patience`` epochs without improvement.

    Lower is better for the monitored metric. An epoch counts as an
    improvement when it beats the best value by more than ``min_delta``.
    """

    def __init__(self, factor=0.1, patience=5, min_delta=1e-4, min_lr=1e-6):
        if not 0 < factor < 1:
            raise ParameterError(f"factor must lie in (0, 1), got {factor}")
        self.factor = factor
        self.patience = patience
        self.min_delta = min_delta
        self.min_lr = min_lr
        self.best = math.inf
        self.stall = 0

    def step(self, metric: float, groups: dict) -> bool:
        """Returns True when the learning rates were reduced."""
        if metric < self.best - self.min_delta:
            self.best = metric
            self.stall = 0
            return False
        self.stall += 1
        if self.stall < self.patience:
            return False
        self.stall = 0
        _reduce(groups, self.factor, self.min_lr)
        return True


class MilestoneScheduler:
    """Multiply LRs by ``factor`` when the finished-epoch count hits a milestone."""

    def __init__(self, milestones, factor=0.1, min_lr=0.0):
        self.milestones = sorted(milestones)
        self.factor = factor
        self.min_lr = min_lr
        self.epoch = 0

    def step(self, metric, groups: dict) -> bool:
        self.epoch += 1
        if self.epoch in self.milestones:
            _reduce(groups, self.factor, self.min_lr)
            return True
        return False


def _reduce(groups: dict, factor: float, min_lr: float) -> None:
    # floor scaled per group so the poly/standard ratio survives hitting it
    base = groups[Tag.STANDARD].lr if Tag.STANDARD in groups else None
    if base is not None and base * factor < min_lr:
        factor = min_lr / base if base > 0 else 1.0
        factor = min(factor, 1.0)
    for g in groups.values():
        g.lr *= factor
