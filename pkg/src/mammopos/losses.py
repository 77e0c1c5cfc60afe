"""Wing loss and its landmark-weighted aggregate.

The wing function penalises small residuals logarithmically and large ones
linearly, switching at width w with a continuity offset c = w - w*ln(1 + w/e):

    wing(y) = w * ln(1 + |y| / e)   if |y| < w
              |y| - c               otherwise

The aggregate loss averages wing over the x and y residuals of each landmark
and combines the three landmarks with configurable weights.

Two parallel implementations live here on purpose: a numpy one with
hand-derived gradients (law_grad) and a torch one used during training. Tests
hold them to each other and to finite differences; neither replaces the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

N_LANDMARKS = 3
N_COORDS = 2 * N_LANDMARKS


@dataclass(frozen=True)
class WingParams:
    """Wing shape: width w of the logarithmic region and curvature epsilon."""

    w: float = 3.0
    epsilon: float = 1.5

    def __post_init__(self):
        if not (self.w > 0 and self.epsilon > 0):
            raise ValueError(f"wing params must be positive, got w={self.w} eps={self.epsilon}")

    @property
    def c(self) -> float:
        """Continuity constant making the two branches meet at |y| = w."""
        return self.w - self.w * math.log(1.0 + self.w / self.epsilon)


@dataclass(frozen=True)
class LawWeights:
    """Per-landmark weights: alpha for nipple, beta for pec1, gamma for pec2."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("landmark weights must be non-negative")
        if self.alpha == self.beta == self.gamma == 0:
            raise ValueError("at least one landmark weight must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma], dtype=np.float64)


def wing(y_abs, params: WingParams):
    """Elementwise wing penalty of non-negative residual magnitudes.

    Accepts a scalar or ndarray; returns the same shape as float64.
    """
    y = np.asarray(y_abs, dtype=np.float64)
    if np.any(y < 0):
        raise ValueError("wing expects non-negative magnitudes")
    out = np.where(
        y < params.w,
        params.w * np.log1p(y / params.epsilon),
        y - params.c,
    )
    return out if out.ndim else float(out)


def _residuals(pred, target) -> np.ndarray:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.shape != (N_COORDS,) or t.shape != (N_COORDS,):
        raise ValueError(f"expected {N_COORDS} coordinates, got {p.shape} and {t.shape}")
    return p - t


def law_loss(pred, target, params: WingParams, weights: LawWeights) -> float:
    """Landmark-weighted wing loss of one prediction.

    pred and target are length-6 vectors laid out
    [nipple_x, nipple_y, pec1_x, pec1_y, pec2_x, pec2_y].
    """
    d = _residuals(pred, target).reshape(N_LANDMARKS, 2)
    per_landmark = wing(np.abs(d), params).mean(axis=1)
    return float(per_landmark @ weights.as_array())


def law_grad(pred, target, params: WingParams, weights: LawWeights) -> np.ndarray:
    """Gradient of law_loss with respect to pred (length-6 float64).

    wing'(y) = w / (epsilon + y) on the log branch, 1 on the linear branch.
    At the branch point |y| = w the linear value is used; at y = 0 the
    subgradient 0 is returned (sign(0) = 0).
    """
    d = _residuals(pred, target)
    mag = np.abs(d)
    dwing = np.where(mag < params.w, params.w / (params.epsilon + mag), 1.0)
    w_per_coord = np.repeat(weights.as_array(), 2)
    return (w_per_coord / 2.0) * dwing * np.sign(d)


def wing_torch(y_abs: torch.Tensor, params: WingParams) -> torch.Tensor:
    """Elementwise wing penalty on a tensor of non-negative magnitudes."""
    c = params.w - params.w * math.log(1.0 + params.w / params.epsilon)
    return torch.where(
        y_abs < params.w,
        params.w * torch.log1p(y_abs / params.epsilon),
        y_abs - c,
    )

def law_loss_torch(
    pred: torch.Tensor,
    target: torch.Tensor,
    params: WingParams,
    weights: LawWeights,
) -> torch.Tensor:
    """Batched landmark-weighted wing loss, mean over the batch.

    pred and target have shape (B, 6) in the same layout as law_loss.
    """
    if pred.shape != target.shape or pred.shape[-1] != N_COORDS:
        raise ValueError(f"expected (..., {N_COORDS}) tensors, got {tuple(pred.shape)} and {tuple(target.shape)}")
    d = (pred - target).reshape(-1, N_LANDMARKS, 2)
    per_landmark = wing_torch(d.abs(), params).mean(dim=2)
    w = torch.tensor([weights.alpha, weights.beta, weights.gamma], dtype=pred.dtype, device=pred.device)
    return (per_landmark * w).sum(dim=1).mean()
