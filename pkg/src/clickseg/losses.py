"""Soft dice loss, its weighted variant, analytic gradients and the DSC
evaluation metric.

The standard variant keeps the conventional factor 2 in the numerator so a
perfect prediction reaches loss 0; ``as_printed`` drops it (perfect overlap
then scores 0.5). The weighted loss defaults to per-pixel weighting inside
the sums; ``scalar`` mode instead multiplies the plain dice loss by the mean
weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .errors import DegenerateWeights, ShapeMismatch
from .weighting import WeightMap


class DiceVariant(str, Enum):
    STANDARD = "standard"
    AS_PRINTED = "as_printed"


class WeightingMode(str, Enum):
    PIXELWISE = "pixelwise"
    SCALAR = "scalar"


@dataclass
class LossConfig:
    dice_variant: DiceVariant = DiceVariant.STANDARD
    weighting_mode: WeightingMode = WeightingMode.PIXELWISE
    smooth_eps: float = 1e-6

    def __post_init__(self):
        self.dice_variant = DiceVariant(self.dice_variant)
        self.weighting_mode = WeightingMode(self.weighting_mode)
        if self.smooth_eps <= 0:
            raise ValueError("smooth_eps must be positive")

    @property
    def factor(self) -> float:
        return 2.0 if self.dice_variant is DiceVariant.STANDARD else 1.0


DEFAULT_LOSS = LossConfig()


def _as_f64(a) -> np.ndarray:
    if isinstance(a, WeightMap):
        a = a.weights
    return np.asarray(a, dtype=np.float64)


def _check_shapes(*arrays) -> None:
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise ShapeMismatch(f"mismatched shapes: {sorted(shapes)}")


def dice_loss(pred, gt, config: LossConfig = DEFAULT_LOSS) -> float:
    """Soft dice loss between a probability map and a binary mask."""
    p, g = _as_f64(pred), _as_f64(gt)
    _check_shapes(p, g)
    eps = config.smooth_eps
    num = config.factor * float(np.sum(p * g)) + eps
    den = float(np.sum(p) + np.sum(g)) + eps
    return 1.0 - num / den


def weighted_dice_loss(pred, gt, weights,
                       config: LossConfig = DEFAULT_LOSS) -> float:
    """Weighted soft dice loss.

    pixelwise: 1 - (f * sum(w p g) + eps) / (sum(w (p + g)) + eps)
    scalar:    mean(w) * dice_loss(pred, gt)

    Raises:
        DegenerateWeights: weights sum to zero.
    """
    p, g, w = _as_f64(pred), _as_f64(gt), _as_f64(weights)
    _check_shapes(p, g, w)
    if not np.any(w):
        raise DegenerateWeights("weight map sums to zero")
    if config.weighting_mode is WeightingMode.SCALAR:
        return float(np.mean(w)) * dice_loss(p, g, config)
    eps = config.smooth_eps
    num = config.factor * float(np.sum(w * p * g)) + eps
    den = float(np.sum(w * (p + g))) + eps
    return 1.0 - num / den


def loss_gradient(pred, gt, weights,
                  config: LossConfig = DEFAULT_LOSS) -> np.ndarray:
    """Gradient of :func:`weighted_dice_loss` w.r.t. every prediction pixel."""
    p, g, w = _as_f64(pred), _as_f64(gt), _as_f64(weights)
    _check_shapes(p, g, w)
    if not np.any(w):
        raise DegenerateWeights("weight map sums to zero")
    if config.weighting_mode is WeightingMode.SCALAR:
        ones = np.ones_like(p)
        _, grad = kernels.weighted_dice_with_grad(p, g, ones, config.factor,
                                                  config.smooth_eps)
        return float(np.mean(w)) * grad
    _, grad = kernels.weighted_dice_with_grad(p, g, w, config.factor,
                                              config.smooth_eps)
    return grad


def binarize(probs, threshold: float = 0.5) -> np.ndarray:
    """Threshold a probability map to a binary mask."""
    return np.asarray(probs) >= threshold


def dsc(pred_binary, gt) -> float:
    """Dice score coefficient on a 0-100 scale.

    Returns 100.0 when both masks are empty (correct rejection of an absent
    region on a slice).
    """
    p = np.asarray(pred_binary).astype(bool)
    g = _as_f64(gt).astype(bool)
    _check_shapes(p, g)
    p_count = int(p.sum())
    g_count = int(g.sum())
    if p_count + g_count == 0:
        return 100.0
    inter = int((p & g).sum())
    return 100.0 * 2.0 * inter / (p_count + g_count)
