# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for disk rasterization, distance transforms and the
weighted dice loss. Mirrors the API of ``clickseg.kernels.fallback``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

cdef double BIG = 1e30


def disk_union(int height, int width, long[::1] rows, long[::1] cols,
               long[::1] sizes):
    """Union of rasterized disks as a uint8 mask.

    A disk of diameter s has integer radius s // 2: pixel (r, c) belongs to
    the disk centered at (r0, c0) iff (r-r0)^2 + (c-c0)^2 <= (s // 2)^2
    (exact integer arithmetic; diameter 1 paints exactly one pixel,
    diameter 5 paints 13).
    """
    out = np.zeros((height, width), dtype=np.uint8)
    cdef unsigned char[:, ::1] m = out
    cdef Py_ssize_t k, n = rows.shape[0]
    cdef long r0, c0, rad, rad2, r, c, dr, dc, rlo, rhi, clo, chi
    for k in range(n):
        r0 = rows[k]
        c0 = cols[k]
        rad = sizes[k] // 2
        rad2 = rad * rad
        rlo = r0 - rad if r0 - rad > 0 else 0
        rhi = r0 + rad + 1 if r0 + rad + 1 < height else height
        clo = c0 - rad if c0 - rad > 0 else 0
        chi = c0 + rad + 1 if c0 + rad + 1 < width else width
        for r in range(rlo, rhi):
            dr = r - r0
            for c in range(clo, chi):
                dc = c - c0
                if dr * dr + dc * dc <= rad2:
                    m[r, c] = 1
    return out


def gaussian_disk_max(int height, int width, long[::1] rows, long[::1] cols,
                      long[::1] sizes, double peak):
    """Pointwise maximum of gaussian-profiled click disks.

    Inside each disk the value is peak * exp(-8 r^2 / s^2), i.e. a gaussian
    with sigma = s/4, so the profile decays to peak * exp(-2) at the disk
    edge. Outside all disks the value is 0.
    """
    out = np.zeros((height, width), dtype=np.float64)
    cdef double[:, ::1] m = out
    cdef Py_ssize_t k, n = rows.shape[0]
    cdef long r0, c0, s, rad, rad2, r, c, dr, dc, rlo, rhi, clo, chi
    cdef double v
    for k in range(n):
        r0 = rows[k]
        c0 = cols[k]
        s = sizes[k]
        rad = s // 2
        rad2 = rad * rad
        rlo = r0 - rad if r0 - rad > 0 else 0
        rhi = r0 + rad + 1 if r0 + rad + 1 < height else height
        clo = c0 - rad if c0 - rad > 0 else 0
        chi = c0 + rad + 1 if c0 + rad + 1 < width else width
        for r in range(rlo, rhi):
            dr = r - r0
            for c in range(clo, chi):
                dc = c - c0
                if dr * dr + dc * dc <= rad2:
                    v = peak * exp(-8.0 * (dr * dr + dc * dc)
                                   / (<double> (s * s)))
                    if v > m[r, c]:
                        m[r, c] = v
    return out


cdef void _dt_1d(double[::1] f, double[::1] d, long[::1] v, double[::1] z,
                 Py_ssize_t n) noexcept nogil:
    # Lower-envelope-of-parabolas 1D squared distance transform.
    cdef Py_ssize_t k = 0, q
    cdef double s
    v[0] = 0
    z[0] = -BIG
    z[1] = BIG
    for q in range(1, n):
        while True:
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = BIG
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


def sq_dist_to_true(const unsigned char[:, ::1] mask):
    """Exact squared Euclidean distance from every pixel to the nearest
    True pixel of ``mask``. Returns +inf everywhere when mask is all False."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1], r, c
    cdef Py_ssize_t n = h if h > w else w
    mid_np = np.empty((h, w), dtype=np.float64)
    out_np = np.empty((h, w), dtype=np.float64)
    f_np = np.empty(n, dtype=np.float64)
    d_np = np.empty(n, dtype=np.float64)
    v_np = np.empty(n, dtype=np.int64)
    z_np = np.empty(n + 1, dtype=np.float64)
    cdef double[:, ::1] mid = mid_np
    cdef double[:, ::1] out = out_np
    cdef double[::1] f = f_np
    cdef double[::1] d = d_np
    cdef double[::1] z = z_np
    cdef long[::1] v = v_np
    for c in range(w):
        for r in range(h):
            f[r] = 0.0 if mask[r, c] else BIG
        _dt_1d(f, d, v, z, h)
        for r in range(h):
            mid[r, c] = d[r]
    for r in range(h):
        for c in range(w):
            f[c] = mid[r, c]
        _dt_1d(f, d, v, z, w)
        for c in range(w):
            out[r, c] = d[c]
    out_np[out_np >= 0.5 * BIG] = np.inf
    return out_np


def weighted_dice_with_grad(const double[:, ::1] p, const double[:, ::1] g,
                            const double[:, ::1] w, double factor, double eps):
    """Weighted soft dice loss and its gradient w.r.t. the prediction.

    loss = 1 - (factor * sum(w p g) + eps) / (sum(w (p + g)) + eps)
    grad_i = w_i * (A - factor * g_i * B) / B^2 with A, B the two sums above.
    """
    cdef Py_ssize_t h = p.shape[0], wd = p.shape[1], r, c
    cdef double A = eps, B = eps, B2
    for r in range(h):
        for c in range(wd):
            A += factor * w[r, c] * p[r, c] * g[r, c]
            B += w[r, c] * (p[r, c] + g[r, c])
    grad_np = np.empty((h, wd), dtype=np.float64)
    cdef double[:, ::1] grad = grad_np
    B2 = B * B
    for r in range(h):
        for c in range(wd):
            grad[r, c] = w[r, c] * (A - factor * g[r, c] * B) / B2
    return 1.0 - A / B, grad_np
