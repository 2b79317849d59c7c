"""Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer.

Covers what the ingestion pipeline needs: the fixed 348-byte header, the
common scalar dtypes, scl_slope/scl_inter rescaling and Fortran voxel order.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import FileMissing, InvalidParams

_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}

HEADER_SIZE = 348


def _open(path, mode):
    p = Path(path)
    if str(p).endswith(".gz"):
        return gzip.open(p, mode)
    return open(p, mode)


def read_volume(path) -> np.ndarray:
    """Load a NIfTI-1 volume as a float or integer ndarray in (x, y, z) order."""
    p = Path(path)
    if not p.exists():
        raise FileMissing(str(p))
    with _open(p, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise InvalidParams(f"{p}: truncated NIfTI header")
    order = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        order = ">"
        (sizeof_hdr,) = struct.unpack_from(">i", raw, 0)
        if sizeof_hdr != HEADER_SIZE:
            raise InvalidParams(f"{p}: not a NIfTI-1 file")
    dim = struct.unpack_from(f"{order}8h", raw, 40)
    (datatype,) = struct.unpack_from(f"{order}h", raw, 70)
    (vox_offset,) = struct.unpack_from(f"{order}f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from(f"{order}2f", raw, 112)
    magic = raw[344:348]
    if magic[:2] not in (b"n+", b"ni"):
        raise InvalidParams(f"{p}: bad NIfTI magic {magic!r}")
    if datatype not in _DTYPES:
        raise InvalidParams(f"{p}: unsupported NIfTI datatype {datatype}")
    ndim = dim[0]
    shape = tuple(max(1, d) for d in dim[1:1 + max(ndim, 3)])
    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(order)
    count = int(np.prod(shape))
    start = int(vox_offset) if vox_offset else HEADER_SIZE
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=start)
    vol = data.reshape(shape, order="F")
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        vol = vol.astype(np.float32) * slope + scl_inter
    return np.asarray(vol)


def write_volume(path, volume: np.ndarray) -> None:
    """Write a 3D array as a single-file NIfTI-1 volume (gzipped if .gz)."""
    vol = np.asarray(volume)
    if vol.ndim != 3:
        raise InvalidParams("only 3D volumes are written")
    dtype = np.dtype(vol.dtype)
    if dtype not in _CODES:
        vol = vol.astype(np.float32)
        dtype = np.dtype(np.float32)
    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    dim = (3,) + vol.shape + (1, 1, 1, 1)
    struct.pack_into("<8h", header, 40, *dim)
    struct.pack_into("<h", header, 70, _CODES[dtype])
    struct.pack_into("<h", header, 72, dtype.itemsize * 8)
    struct.pack_into("<8f", header, 76, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", header, 108, 352.0)  # vox_offset
    struct.pack_into("<2f", header, 112, 1.0, 0.0)  # scl_slope, scl_inter
    header[344:348] = b"n+1\x00"
    payload = bytes(header) + b"\x00" * 4 + np.asfortranarray(vol).tobytes(order="F")
    with _open(path, "wb") as fh:
        fh.write(payload)
