"""Click simulation and guidance-channel rendering.

Simulated user interactions pair one foreground click (inside the region of
interest) with one background click (in the surrounding band). Clicks are
rasterized as binary disks into two image-sized guidance channels that are
concatenated with the image as extra network inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import instrumentation, kernels
from .errors import AllForeground, EmptyMask, InvalidParams, OutOfBounds

#: Background clicks are sampled from this distance band (in pixels) around
#: the foreground boundary: close enough to be informative, not trivially far.
BG_BAND_PX = (5.0, 40.0)


class Polarity(str, Enum):
    FOREGROUND = "foreground"
    BACKGROUND = "background"


@dataclass(frozen=True)
class Click:
    """One user click: pixel position, polarity and disk diameter."""

    row: int
    col: int
    polarity: Polarity
    size_px: int

    def __post_init__(self):
        if self.size_px < 1:
            raise InvalidParams(f"click size must be >= 1, got {self.size_px}")

    def with_size(self, size_px: int) -> "Click":
        return Click(self.row, self.col, self.polarity, size_px)


@dataclass
class ClickSet:
    """Ordered clicks plus the number of FG+BG interactions they represent."""

    clicks: list[Click] = field(default_factory=list)
    interaction_count: int = 0

    @property
    def fg_clicks(self) -> list[Click]:
        return [c for c in self.clicks if c.polarity is Polarity.FOREGROUND]

    @property
    def bg_clicks(self) -> list[Click]:
        return [c for c in self.clicks if c.polarity is Polarity.BACKGROUND]

    def merged(self, other: "ClickSet") -> "ClickSet":
        return ClickSet(self.clicks + other.clicks,
                        self.interaction_count + other.interaction_count)


@dataclass
class GuidanceMaps:
    """Image-sized FG/BG channels, 1.0 on click disks and 0.0 elsewhere."""

    fg_map: np.ndarray
    bg_map: np.ndarray


class SizeMode(str, Enum):
    FIXED = "fixed"
    DYNAMIC = "dynamic"


@dataclass
class ClickSizePolicy:
    """How the click disk diameter is chosen.

    ``fixed`` always uses ``fixed_size_px``; ``dynamic`` scales the size with
    the mask pixel count (diameter = alpha * count, rounded half-up and
    clamped to [min_size_px, max_size_px]).
    """

    mode: SizeMode = SizeMode.FIXED
    fixed_size_px: int = 5
    alpha: float = 1.0 / 500.0
    min_size_px: int = 1
    max_size_px: int = 128

    def __post_init__(self):
        self.mode = SizeMode(self.mode)
        if self.fixed_size_px < 1 or self.min_size_px < 1:
            raise InvalidParams("click sizes must be >= 1")
        if self.max_size_px < self.min_size_px:
            raise InvalidParams("max_size_px must be >= min_size_px")
        if self.alpha <= 0:
            raise InvalidParams("alpha must be positive")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "fixed_size_px": self.fixed_size_px,
            "alpha": self.alpha,
            "min_size_px": self.min_size_px,
            "max_size_px": self.max_size_px,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClickSizePolicy":
        return cls(**d)


def compute_click_size(alpha: float, mask_pixel_count: int,
                       policy: Optional[ClickSizePolicy] = None) -> int:
    """Disk diameter for a mask of ``mask_pixel_count`` foreground pixels.

    Returns round-half-up(alpha * count) clamped to the policy's size range
    (default [1, 128]).

    Raises:
        EmptyMask: count is zero (caller falls back to the fixed size).
        InvalidParams: alpha is not positive.
    """
    if alpha <= 0:
        raise InvalidParams("alpha must be positive")
    if mask_pixel_count <= 0:
        raise EmptyMask("cannot size a click against an empty mask")
    lo, hi = (policy.min_size_px, policy.max_size_px) if policy else (1, 128)
    size = math.floor(alpha * mask_pixel_count + 0.5)
    return int(min(max(size, lo), hi))


def _as_bool_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise InvalidParams(f"mask must be 2D, got shape {m.shape}")
    return m.astype(bool)


def _sample_index(rng: np.random.Generator, candidates: np.ndarray) -> tuple[int, int]:
    rows, cols = np.nonzero(candidates)
    k = int(rng.integers(len(rows)))
    return int(rows[k]), int(cols[k])


def simulate_interaction(gt_mask, policy: ClickSizePolicy, rng_seed,
                         prior_prediction=None,
                         size_px: Optional[int] = None) -> ClickSet:
    """Simulate one interaction (one FG click + one BG click) on a mask.

    The FG click center is sampled uniformly from the foreground eroded by
    the click radius (so the disk stays inside), falling back to any
    foreground pixel. The BG center is sampled from the background band
    ``BG_BAND_PX`` around the foreground boundary, falling back to any
    background pixel. When ``prior_prediction`` is given (refinement rounds),
    FG is drawn from false negatives and BG from false positives instead,
    reverting to the unconditional rule when the error set is empty.

    ``rng_seed`` fixes all randomness; identical inputs give identical
    clicks. ``size_px`` overrides the policy-derived size (used at test time
    when the size is estimated from a predicted mask).

    Raises:
        EmptyMask: no foreground pixel in ``gt_mask``.
        AllForeground: no background pixel exists.
    """
    instrumentation.record("guidance.simulate_interaction")
    gt = _as_bool_mask(gt_mask)
    if not gt.any():
        raise EmptyMask("ground truth mask has no foreground")
    if gt.all():
        raise AllForeground("ground truth mask has no background")
    rng = np.random.default_rng(rng_seed)

    if size_px is not None:
        size = int(size_px)
    elif policy.mode is SizeMode.DYNAMIC:
        size = compute_click_size(policy.alpha, int(gt.sum()), policy)
    else:
        size = policy.fixed_size_px

    fn = fp = None
    if prior_prediction is not None:
        pred = _as_bool_mask(prior_prediction)
        if pred.shape != gt.shape:
            raise InvalidParams("prior prediction shape differs from mask")
        fn = gt & ~pred
        fp = pred & ~gt

    # FG center: error-guided when available, else safely inside the mask
    # (eroded so the whole disk of radius size // 2 stays in the foreground;
    # minimum erosion of 1 keeps even single-pixel clicks strictly interior,
    # a boundary pixel marks its own side too ambiguously).
    if fn is not None and fn.any():
        fg_pool = fn
    else:
        radius = max(size // 2, 1)
        sq_to_bg = kernels.sq_dist_to_true(~gt)
        eroded = gt & (sq_to_bg > radius * radius)
        fg_pool = eroded if eroded.any() else gt
    fg_row, fg_col = _sample_index(rng, fg_pool)

    # BG center: error-guided when available, else the band near the boundary.
    if fp is not None and fp.any():
        bg_pool = fp
    else:
        sq_to_fg = kernels.sq_dist_to_true(gt)
        lo, hi = BG_BAND_PX
        band = ~gt & (sq_to_fg >= lo * lo) & (sq_to_fg <= hi * hi)
        bg_pool = band if band.any() else ~gt
    bg_row, bg_col = _sample_index(rng, bg_pool)

    return ClickSet(
        clicks=[
            Click(fg_row, fg_col, Polarity.FOREGROUND, size),
            Click(bg_row, bg_col, Polarity.BACKGROUND, size),
        ],
        interaction_count=1,
    )


def _check_bounds(clicks: Sequence[Click], height: int, width: int) -> None:
    for c in clicks:
        if not (0 <= c.row < height and 0 <= c.col < width):
            raise OutOfBounds(
                f"click at ({c.row}, {c.col}) outside {height}x{width} image")


def render_guidance(clicks: ClickSet, height: int, width: int) -> GuidanceMaps:
    """Rasterize clicks into FG/BG guidance channels.

    Each click paints the disk of diameter ``size_px`` centered on it:
    pixels within Euclidean distance size // 2 of the center (a diameter-1
    disk is a single pixel, diameter 5 covers 13), clipped to the image.
    Disks from multiple clicks union. FG clicks write only the FG map, BG
    clicks only the BG map.

    Raises:
        OutOfBounds: a click center lies outside the image.
    """
    instrumentation.record("guidance.render_guidance")
    _check_bounds(clicks.clicks, height, width)

    def _rasterize(subset: list[Click]) -> np.ndarray:
        if not subset:
            return np.zeros((height, width), dtype=np.float32)
        rows = [c.row for c in subset]
        cols = [c.col for c in subset]
        sizes = [c.size_px for c in subset]
        return kernels.disk_union(height, width, rows, cols, sizes).astype(np.float32)

    return GuidanceMaps(fg_map=_rasterize(clicks.fg_clicks),
                        bg_map=_rasterize(clicks.bg_clicks))


def estimate_test_time_size(initial_prediction, policy: ClickSizePolicy) -> int:
    """Click size from a predicted mask's pixel count (dynamic policies only).

    Callers run a first inference pass with ``fixed_size_px`` clicks, call
    this on the predicted mask, then re-render the clicks at the returned
    size and re-run inference exactly once.

    Raises:
        EmptyMask: prediction is empty (caller keeps the fixed size).
        InvalidParams: policy is not dynamic.
    """
    if policy.mode is not SizeMode.DYNAMIC:
        raise InvalidParams("size estimation requires a dynamic policy")
    count = int(np.count_nonzero(_as_bool_mask(initial_prediction)))
    return compute_click_size(policy.alpha, count, policy)
