"""Kernel backend selection.

The compiled Cython extension is preferred; the numpy/scipy fallback is used
when the extension is missing or when ``CLICKSEG_KERNELS=fallback`` is set.
``BACKEND`` reports which implementation is active.
"""

import os

import numpy as np

_forced = os.environ.get("CLICKSEG_KERNELS", "").strip().lower()

if _forced == "fallback":
    from . import fallback as _impl

    BACKEND = "fallback"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        if _forced == "native":
            raise
        from . import fallback as _impl

        BACKEND = "fallback"


def _as_i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def disk_union(height, width, rows, cols, sizes):
    """Rasterize the union of disks (diameter ``sizes``) into a uint8 mask."""
    return _impl.disk_union(int(height), int(width), _as_i64(rows),
                            _as_i64(cols), _as_i64(sizes))


def gaussian_disk_max(height, width, rows, cols, sizes, peak):
    """Pointwise max of gaussian click disks (sigma = diameter/4)."""
    return _impl.gaussian_disk_max(int(height), int(width), _as_i64(rows),
                                   _as_i64(cols), _as_i64(sizes), float(peak))


def sq_dist_to_true(mask):
    """Exact squared Euclidean distance to the nearest True pixel."""
    m = np.ascontiguousarray(np.asarray(mask, dtype=bool).astype(np.uint8))
    return _impl.sq_dist_to_true(m)


def weighted_dice_with_grad(probs, gt, weights, factor, eps):
    """Fused weighted dice loss + analytic gradient w.r.t. ``probs``."""
    return _impl.weighted_dice_with_grad(_as_f64(probs), _as_f64(gt),
                                         _as_f64(weights), float(factor),
                                         float(eps))
