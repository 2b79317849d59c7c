"""Pure numpy/scipy implementations of the hot kernels.

Used when the compiled extension is unavailable or explicitly disabled via
``CLICKSEG_KERNELS=fallback``. Function contracts match
``clickseg.kernels._native`` exactly; see that module for the math.
"""

import numpy as np
from scipy import ndimage


def disk_union(height, width, rows, cols, sizes):
    out = np.zeros((height, width), dtype=np.uint8)
    for r0, c0, s in zip(rows, cols, sizes):
        r0, c0 = int(r0), int(c0)
        rad = int(s) // 2
        rlo, rhi = max(0, r0 - rad), min(height, r0 + rad + 1)
        clo, chi = max(0, c0 - rad), min(width, c0 + rad + 1)
        if rlo >= rhi or clo >= chi:
            continue
        dr = np.arange(rlo, rhi) - r0
        dc = np.arange(clo, chi) - c0
        d2 = dr[:, None] ** 2 + dc[None, :] ** 2
        out[rlo:rhi, clo:chi] |= (d2 <= rad * rad).astype(np.uint8)
    return out


def gaussian_disk_max(height, width, rows, cols, sizes, peak):
    out = np.zeros((height, width), dtype=np.float64)
    for r0, c0, s in zip(rows, cols, sizes):
        r0, c0, s = int(r0), int(c0), int(s)
        rad = s // 2
        rlo, rhi = max(0, r0 - rad), min(height, r0 + rad + 1)
        clo, chi = max(0, c0 - rad), min(width, c0 + rad + 1)
        if rlo >= rhi or clo >= chi:
            continue
        dr = np.arange(rlo, rhi) - r0
        dc = np.arange(clo, chi) - c0
        d2 = (dr[:, None] ** 2 + dc[None, :] ** 2).astype(np.float64)
        vals = np.where(d2 <= rad * rad,
                        peak * np.exp(-8.0 * d2 / (s * s)), 0.0)
        region = out[rlo:rhi, clo:chi]
        np.maximum(region, vals, out=region)
    return out


def sq_dist_to_true(mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.full(mask.shape, np.inf, dtype=np.float64)
    d = ndimage.distance_transform_edt(~mask)
    # Squared pixel-grid distances are integers; round away the sqrt noise
    # so both backends return identical values.
    return np.rint(d * d)


def weighted_dice_with_grad(p, g, w, factor, eps):
    A = factor * float(np.sum(w * p * g)) + eps
    B = float(np.sum(w * (p + g))) + eps
    grad = w * (A - factor * g * B) / (B * B)
    return 1.0 - A / B, grad
