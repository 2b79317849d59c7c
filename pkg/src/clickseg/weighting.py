"""Loss weight maps: gaussian boundary emphasis fused with click weights.

The boundary map peaks at 10 on mask-boundary pixels and decays as a
gaussian of the distance to the boundary on both sides, so deep interior and
far background carry low weight. Foreground clicks contribute weight-10
disks (flat or gaussian-profiled); the fused map is the pointwise maximum of
the two, keeping every value within [0, 10].
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import instrumentation, kernels
from .errors import InvalidParams, NoBoundary, OutOfBounds, ShapeMismatch
from .guidance import Click, ClickSet

PEAK_WEIGHT = 10.0


class ClickWeightMode(str, Enum):
    NONE = "none"
    EQUAL_WEIGHT = "equal_weight"
    GAUSSIAN = "gaussian"


@dataclass
class WeightConfig:
    """Knobs for building weight maps.

    sigma_px controls how fast the boundary emphasis decays with distance;
    click_weight_mode selects flat (equal_weight) or gaussian click disks,
    or disables click weights entirely (none).
    """

    sigma_px: float = 5.0
    peak_weight: float = PEAK_WEIGHT
    click_weight_mode: ClickWeightMode = ClickWeightMode.EQUAL_WEIGHT
    floor_weight: float = 0.0

    def __post_init__(self):
        self.click_weight_mode = ClickWeightMode(self.click_weight_mode)
        if self.sigma_px <= 0:
            raise InvalidParams("sigma_px must be positive")
        if not (0 <= self.floor_weight < self.peak_weight):
            raise InvalidParams("need 0 <= floor_weight < peak_weight")

    def to_dict(self) -> dict:
        return {
            "sigma_px": self.sigma_px,
            "peak_weight": self.peak_weight,
            "click_weight_mode": self.click_weight_mode.value,
            "floor_weight": self.floor_weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightConfig":
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]


@dataclass
class WeightMap:
    """Per-pixel loss weights in [0, peak]."""

    weights: np.ndarray
    peak: float = PEAK_WEIGHT


def gaussian_boundary_map(gt_mask, config: WeightConfig) -> WeightMap:
    """Boundary-distance gaussian weight map for a binary mask.

    weight(i) = max(floor_weight, peak * exp(-D(i)^2 / (2 sigma^2))) where
    D(i) is the Euclidean distance to the nearest boundary pixel (foreground
    pixels 4-adjacent to background). Boundary pixels get exactly ``peak``.

    Raises:
        NoBoundary: mask is empty or full.
    """
    instrumentation.record("weighting.gaussian_boundary_map")
    gt = np.asarray(gt_mask).astype(bool)
    if gt.ndim != 2:
        raise InvalidParams(f"mask must be 2D, got shape {gt.shape}")
    if not gt.any() or gt.all():
        raise NoBoundary("mask has no foreground/background boundary")

    bg = ~gt
    near_bg = np.zeros_like(gt)
    near_bg[:-1] |= bg[1:]
    near_bg[1:] |= bg[:-1]
    near_bg[:, :-1] |= bg[:, 1:]
    near_bg[:, 1:] |= bg[:, :-1]
    boundary = gt & near_bg

    sq = kernels.sq_dist_to_true(boundary)
    w = config.peak_weight * np.exp(-sq / (2.0 * config.sigma_px**2))
    w = np.maximum(w, config.floor_weight)
    return WeightMap(w.astype(np.float32), peak=config.peak_weight)


def click_weight_map(clicks: ClickSet, height: int, width: int,
                     config: WeightConfig) -> WeightMap:
    """Weight map contributed by the foreground clicks.

    equal_weight mode paints ``peak`` on every FG click disk pixel; gaussian
    mode paints peak * exp(-r^2 / (2 (size/4)^2)) inside the disk (value
    peak * e^-2 at the disk edge). Overlapping disks take the pointwise max.
    Background clicks are ignored: only FG clicks feed the loss.

    Raises:
        OutOfBounds: a click center lies outside the image.
    """
    instrumentation.record("weighting.click_weight_map")
    seq = clicks.clicks if isinstance(clicks, ClickSet) else clicks
    fg = [c for c in seq if c.polarity.value == "foreground"]
    for c in fg:
        if not (0 <= c.row < height and 0 <= c.col < width):
            raise OutOfBounds(
                f"click at ({c.row}, {c.col}) outside {height}x{width} image")

    if config.click_weight_mode is ClickWeightMode.NONE or not fg:
        return WeightMap(np.zeros((height, width), dtype=np.float32),
                         peak=config.peak_weight)

    rows = [c.row for c in fg]
    cols = [c.col for c in fg]
    sizes = [c.size_px for c in fg]
    if config.click_weight_mode is ClickWeightMode.EQUAL_WEIGHT:
        m = kernels.disk_union(height, width, rows, cols, sizes)
        w = m.astype(np.float64) * config.peak_weight
    else:
        w = kernels.gaussian_disk_max(height, width, rows, cols, sizes,
                                      config.peak_weight)
    return WeightMap(w.astype(np.float32), peak=config.peak_weight)


def fuse_weight_maps(boundary: WeightMap, clicks: WeightMap) -> WeightMap:
    """Pointwise maximum of the boundary and click weight maps."""
    instrumentation.record("weighting.fuse_weight_maps")
    if boundary.weights.shape != clicks.weights.shape:
        raise ShapeMismatch(
            f"{boundary.weights.shape} vs {clicks.weights.shape}")
    return WeightMap(np.maximum(boundary.weights, clicks.weights),
                     peak=max(boundary.peak, clicks.peak))


# Binary container for weight maps: magic, version, height, width, peak,
# then float32 row-major data (little-endian).
_MAGIC = b"CSWM"
_HEADER = struct.Struct("<4sHII f")


def save_weight_map(path, wmap: WeightMap) -> None:
    """Write a weight map to the documented binary container."""
    arr = np.ascontiguousarray(wmap.weights, dtype="<f4")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, h, w, wmap.peak))
        fh.write(arr.tobytes())


def load_weight_map(path) -> WeightMap:
    """Read a weight map written by :func:`save_weight_map`."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, version, h, w, peak = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise InvalidParams(f"not a weight map container: {path}")
        if version != 1:
            raise InvalidParams(f"unsupported container version {version}")
        data = np.frombuffer(fh.read(h * w * 4), dtype="<f4").reshape(h, w)
    return WeightMap(data.copy(), peak=peak)
