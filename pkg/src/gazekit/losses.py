"""Quantile (pinball) and MSE losses, as scalars and as graph nodes.

The pinball loss is evaluated at the 10% and 90% quantiles, placed at
prediction -/+ sigma, and averaged over both spherical angles and both
quantiles.  A single sigma is shared by yaw and pitch (isotropic cone
of error).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .geometry import SphericalGaze

TAU_LOW = 0.1
TAU_HIGH = 0.9


def pinball_terms(q: Tensor, tau: float) -> Tensor:
    # max(tau * q, -(1 - tau) * q); subgradient at the kink follows the
    # tau side (first operand wins ties)
    return ad.maximum(q * tau, q * -(1.0 - tau))


def pinball_loss_batch(angles: Tensor, sigma: Tensor, gt: np.ndarray) -> Tensor:
    """Mean pinball loss over a batch.

    angles (B, 2), sigma (B, 1), gt (B, 2).  Averages the four terms
    {yaw, pitch} x {tau=0.1, tau=0.9} and then the batch.
    """
    target = Tensor(gt)
    q_low = target - (angles - sigma)
    q_high = target - (angles + sigma)
    lo = pinball_terms(q_low, TAU_LOW)
    hi = pinball_terms(q_high, TAU_HIGH)
    return (lo.mean() + hi.mean()) * 0.5


def mse_loss_batch(angles: Tensor, gt: np.ndarray) -> Tensor:
    """Mean over the batch of ((dyaw^2 + dpitch^2) / 2); sigma ignored."""
    diff = angles - Tensor(gt)
    return diff.square().mean()


def pinball_loss(pred: SphericalGaze, gt: SphericalGaze) -> float:
    """Scalar pinball loss of one prediction (sigma required >= 0)."""
    sigma = pred.sigma if pred.sigma is not None else 0.0
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    total = 0.0
    for p, g in ((pred.yaw, gt.yaw), (pred.pitch, gt.pitch)):
        q_low = g - (p - sigma)
        q_high = g - (p + sigma)
        total += max(TAU_LOW * q_low, -(1 - TAU_LOW) * q_low)
        total += max(TAU_HIGH * q_high, -(1 - TAU_HIGH) * q_high)
    return total / 4.0


def mse_loss(pred: SphericalGaze, gt: SphericalGaze) -> float:
    """Scalar squared error averaged over the two angles."""
    return ((pred.yaw - gt.yaw) ** 2 + (pred.pitch - gt.pitch) ** 2) / 2.0
