"""Datasets: synthetic desk-scale slices, CT volume ingestion, manifests and
the weight-map cache.

Synthetic slices are the primary test vehicle: a single connected target
shape (the region of interest) plus a few distractor shapes of the same
intensity, so the image alone is ambiguous and clicks carry real
information. Everything is regenerable byte-for-byte from (params, seed).
"""

from __future__ import annotations

import json
import math
import os
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import nifti
from .errors import CacheMiss, FileMissing, GridMismatch, InvalidParams
from .weighting import WeightConfig, WeightMap, load_weight_map, save_weight_map

MANIFEST_VERSION = 1


@dataclass
class Slice:
    """One 2D grayscale image with an optional ground-truth binary mask."""

    image: np.ndarray
    gt_mask: Optional[np.ndarray]
    slice_id: str


@dataclass
class SyntheticShapeParams:
    """Generator knobs for the synthetic dataset."""

    canvas: tuple[int, int] = (64, 64)
    shape_family: str = "blob"  # "ellipse" or "blob" (perturbed ellipse)
    area_range: tuple[int, int] = (150, 900)
    contrast: float = 0.45
    noise_level: float = 0.05
    background_level: float = 0.25
    distractors: int = 2
    seed: int = 0

    def __post_init__(self):
        h, w = self.canvas
        lo, hi = self.area_range
        if self.shape_family not in ("ellipse", "blob"):
            raise InvalidParams(f"unknown shape family {self.shape_family!r}")
        if lo < 8 or lo > hi:
            raise InvalidParams("need 8 <= area_range[0] <= area_range[1]")
        if hi > 0.5 * h * w:
            raise InvalidParams("area range exceeds canvas capacity")
        if self.distractors < 0:
            raise InvalidParams("distractors must be >= 0")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["canvas"] = list(self.canvas)
        d["area_range"] = list(self.area_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticShapeParams":
        d = dict(d)
        d["canvas"] = tuple(d["canvas"])
        d["area_range"] = tuple(d["area_range"])
        return cls(**d)


def _rasterize_shape(rng: np.random.Generator, canvas: tuple[int, int],
                     area: float, family: str,
                     center: tuple[float, float]) -> np.ndarray:
    """Rasterize one connected ellipse/blob of roughly the requested area."""
    h, w = canvas
    aspect = rng.uniform(0.6, 1.6)
    theta = rng.uniform(0.0, math.pi)
    a = math.sqrt(area * aspect / math.pi)
    b = area / (math.pi * a)
    cy, cx = center
    yy, xx = np.mgrid[0:h, 0:w]
    dy, dx = yy - cy, xx - cx
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    if family == "ellipse":
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0
    # Blob: star-shaped radial perturbation of the ellipse keeps it connected.
    amps = rng.uniform(0.05, 0.18, size=3)
    phases = rng.uniform(0.0, 2 * math.pi, size=3)
    harmonics = rng.integers(2, 6, size=3)
    phi = np.arctan2(v, u)
    bump = 1.0 + sum(amp * np.sin(k * phi + ph)
                     for amp, k, ph in zip(amps, harmonics, phases))
    rho = np.sqrt((u * u) / (a * a) + (v * v) / (b * b))
    return rho <= bump


def _chebyshev_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Dilate by a square structuring element, separable in two passes."""
    out = mask.copy()
    for s in range(1, radius + 1):
        out[:, s:] |= mask[:, :-s]
        out[:, :-s] |= mask[:, s:]
    mid = out.copy()
    for s in range(1, radius + 1):
        out[s:, :] |= mid[:-s, :]
        out[:-s, :] |= mid[s:, :]
    return out


def _max_free_radius(free: np.ndarray) -> int:
    """Largest k such that some 2k+1 square fits inside the free region."""
    k = 0
    cur = free
    while True:
        eroded = ~_chebyshev_dilate(~cur, 1)
        if not eroded.any():
            return k
        cur = eroded
        k += 1


def _place_shape(rng: np.random.Generator, params: SyntheticShapeParams,
                 blocked: np.ndarray, area: float,
                 is_target: bool) -> Optional[np.ndarray]:
    """Fit one shape into the unblocked part of the canvas.

    The drawn size is first capped by how much open room actually remains,
    then the shape is rasterized around the canvas center and every
    collision-free integer offset is found exactly by correlating its
    footprint with the blocked map, so a shape that can fit anywhere will
    be placed; one offset is then drawn uniformly. The shape shrinks only
    when genuinely nothing fits at its current size.
    """
    h, w = params.canvas
    lo, hi = params.area_range
    margin = 3
    pad_shape = (2 * h, 2 * w)
    f_blocked = None
    empty = not blocked.any()
    if not empty:
        open_room = ~blocked
        open_room[:margin, :] = open_room[-margin:, :] = False
        open_room[:, :margin] = open_room[:, -margin:] = False
        k = _max_free_radius(open_room)
        area = min(area, max(float(lo), 2.6 * k * k))
    floor_misses = 0
    for _ in range(16):
        center = (h / 2 + rng.uniform(-0.5, 0.5),
                  w / 2 + rng.uniform(-0.5, 0.5))
        blob = _rasterize_shape(rng, params.canvas, area,
                                params.shape_family, center)
        total = int(blob.sum())
        # actual area stays within the configured range so a lucky
        # perturbation cannot rasterize a hog that starves later shapes
        ok_area = lo <= total <= hi if is_target else 0 < total <= hi
        if ok_area:
            ys, xs = np.nonzero(blob)
            dy = np.arange(margin - ys.min(), h - margin - ys.max())
            dx = np.arange(margin - xs.min(), w - margin - xs.max())
            if len(dy) and len(dx):
                # targets keep a 2 px clearance ring; distractors may touch
                # each other but never the target (its ring is in ``blocked``)
                body = _chebyshev_dilate(blob, 2) if is_target else blob
                bys, bxs = np.nonzero(body)
                # cheap path: a handful of random offsets tested directly
                for _ in range(6):
                    sy = int(dy[int(rng.integers(len(dy)))])
                    sx = int(dx[int(rng.integers(len(dx)))])
                    if empty or not blocked[np.clip(bys + sy, 0, h - 1),
                                            np.clip(bxs + sx, 0, w - 1)].any():
                        placed = np.zeros_like(blob)
                        placed[ys + sy, xs + sx] = True
                        return placed
                # exhaustive: correlate the footprint with the blocked map
                # to enumerate every offset that fits, then draw one
                if f_blocked is None:
                    f_blocked = np.fft.rfft2(blocked.astype(np.float32),
                                             pad_shape)
                f_body = np.fft.rfft2(body.astype(np.float32), pad_shape)
                corr = np.fft.irfft2(f_blocked * np.conj(f_body), pad_shape)
                free = np.argwhere(corr[np.ix_(dy % pad_shape[0],
                                               dx % pad_shape[1])] < 0.5)
                if len(free):
                    iy, ix = free[int(rng.integers(len(free)))]
                    placed = np.zeros_like(blob)
                    placed[ys + dy[iy], xs + dx[ix]] = True
                    return placed
                if area <= lo:
                    # nothing fits even at minimum size; one more geometry
                    # redraw, then give up instead of walking the ladder
                    floor_misses += 1
                    if floor_misses >= 2:
                        return None
        area = max(float(lo), area * 0.88)
    return None


def _generate_one(params: SyntheticShapeParams, index: int) -> Slice:
    rng = np.random.default_rng([params.seed, index])
    h, w = params.canvas
    lo, hi = params.area_range

    # All shape sizes are drawn before anything is placed, roles included,
    # and shapes are laid down largest first. Placing the target first would
    # mean only the target can ever claim a big footprint on a crowded
    # canvas, and "the big blob" would then give the region away without
    # any interaction. Distractors share the target's intensity and keep a
    # 2 px clearance from the mask; a shape that cannot fit at its drawn
    # size is retried smaller, and if the target itself cannot fit the whole
    # layout is redrawn.
    target = foreground = None
    for _ in range(12):
        areas = np.concatenate((
            [rng.uniform(lo * 1.05, hi * 0.95)],
            rng.uniform(lo, hi, size=params.distractors),
        ))
        layout_fg = np.zeros((h, w), dtype=bool)
        blocked = np.zeros((h, w), dtype=bool)
        layout_target = None
        for shape_i in np.argsort(-areas, kind="stable"):
            is_target = shape_i == 0
            mask = _place_shape(rng, params, blocked, float(areas[shape_i]),
                                is_target)
            if mask is None:
                if is_target:
                    layout_target = None
                    break
                continue
            layout_fg |= mask
            blocked |= _chebyshev_dilate(mask, 2) if is_target else mask
            if is_target:
                layout_target = mask
        if layout_target is not None:
            target, foreground = layout_target, layout_fg
            break
    if target is None:
        raise InvalidParams(
            f"could not place a shape with area in {params.area_range} "
            f"on canvas {params.canvas}")

    image = np.full((h, w), params.background_level, dtype=np.float64)
    image[foreground] += params.contrast
    if params.noise_level > 0:
        image += rng.normal(0.0, params.noise_level, size=(h, w))
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return Slice(image=image, gt_mask=target.astype(np.uint8),
                 slice_id=f"synth-{params.seed}-{index:05d}")


def generate_synthetic(params: SyntheticShapeParams, count: int) -> list[Slice]:
    """Generate ``count`` synthetic slices, deterministic per (params, seed)."""
    if count <= 0:
        raise InvalidParams("count must be positive")
    return [_generate_one(params, i) for i in range(count)]


# ---------------------------------------------------------------------------
# CT volume ingestion

DEFAULT_WINDOW = (-100.0, 400.0)


def ingest_volume(path, label_path, roi_label: int,
                  window: tuple[float, float] = DEFAULT_WINDOW,
                  drop_empty: bool = False) -> list[Slice]:
    """Slice a CT volume + label volume into axial 2D slices.

    Intensities are windowed to ``window`` then min-max normalized to [0, 1];
    the mask is (labels == roi_label). Slices whose mask is empty are kept
    unless ``drop_empty`` (they cannot be used for click simulation but count
    in volume-level evaluation).
    """
    img_path, lab_path = Path(path), Path(label_path)
    for p in (img_path, lab_path):
        if not p.exists():
            raise FileMissing(str(p))
    vol = nifti.read_volume(img_path)
    lab = nifti.read_volume(lab_path)
    if vol.shape != lab.shape:
        raise GridMismatch(f"image {vol.shape} vs labels {lab.shape}")
    if not (lab == roi_label).any():
        warnings.warn(f"label {roi_label} absent from {lab_path.name}; "
                      "all masks will be empty")
    lo, hi = window
    if hi <= lo:
        raise InvalidParams("window must satisfy lo < hi")
    stem = img_path.name.removesuffix(".gz").removesuffix(".nii")
    slices = []
    for z in range(vol.shape[2]):
        img = np.clip(vol[:, :, z].astype(np.float32), lo, hi)
        img = (img - lo) / (hi - lo)
        mask = (lab[:, :, z] == roi_label).astype(np.uint8)
        if drop_empty and not mask.any():
            continue
        slices.append(Slice(image=img, gt_mask=mask,
                            slice_id=f"{stem}-z{z:04d}"))
    return slices


# ---------------------------------------------------------------------------
# Manifests

@dataclass
class DatasetManifest:
    """Regenerable description of a dataset and its train/val/test split.

    ``sources`` entries are either {"kind": "synthetic", "params", "count"}
    or {"kind": "volume", "image", "labels", "roi_label", ...}; ``splits``
    maps slice_id -> split tag. Volumes are assigned a split as a whole so a
    volume never leaks across train/test.
    """

    seed: int = 0
    sources: list = field(default_factory=list)
    splits: dict = field(default_factory=dict)

    def slice_ids(self, split: str) -> list[str]:
        return [sid for sid, tag in self.splits.items() if tag == split]

    def to_json(self) -> str:
        return json.dumps({"version": MANIFEST_VERSION, "seed": self.seed,
                           "sources": self.sources, "splits": self.splits},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        if d.get("version") != MANIFEST_VERSION:
            raise InvalidParams(f"unsupported manifest version {d.get('version')}")
        return cls(seed=d["seed"], sources=d["sources"], splits=d["splits"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        p = Path(path)
        if not p.exists():
            raise FileMissing(str(p))
        return cls.from_json(p.read_text())


def build_synthetic_manifest(params: SyntheticShapeParams,
                             split_counts: dict[str, int]) -> DatasetManifest:
    """Manifest over a fresh synthetic dataset, split in generation order."""
    total = sum(split_counts.values())
    if total <= 0:
        raise InvalidParams("split counts must sum to a positive total")
    manifest = DatasetManifest(seed=params.seed)
    manifest.sources.append({"kind": "synthetic", "params": params.to_dict(),
                             "count": total})
    index = 0
    for split, n in split_counts.items():
        for _ in range(n):
            manifest.splits[f"synth-{params.seed}-{index:05d}"] = split
            index += 1
    return manifest


def add_volume_source(manifest: DatasetManifest, image_path, label_path,
                      roi_label: int, split: str,
                      window: tuple[float, float] = DEFAULT_WINDOW) -> None:
    """Register a volume under a single split (whole-volume assignment)."""
    slices = ingest_volume(image_path, label_path, roi_label, window=window)
    manifest.sources.append({
        "kind": "volume",
        "image": str(image_path),
        "labels": str(label_path),
        "roi_label": roi_label,
        "window": list(window),
    })
    for s in slices:
        manifest.splits[s.slice_id] = split


def materialize(manifest: DatasetManifest, split: str) -> list[Slice]:
    """Instantiate the slices of one split, in manifest order."""
    wanted = {sid for sid, tag in manifest.splits.items() if tag == split}
    out: dict[str, Slice] = {}
    for src in manifest.sources:
        if src["kind"] == "synthetic":
            params = SyntheticShapeParams.from_dict(src["params"])
            for s in generate_synthetic(params, src["count"]):
                if s.slice_id in wanted:
                    out[s.slice_id] = s
        elif src["kind"] == "volume":
            for s in ingest_volume(src["image"], src["labels"],
                                   src["roi_label"],
                                   window=tuple(src.get("window", DEFAULT_WINDOW))):
                if s.slice_id in wanted:
                    out[s.slice_id] = s
        else:
            raise InvalidParams(f"unknown source kind {src['kind']!r}")
    ordered = [out[sid] for sid in manifest.splits if sid in out]
    missing = wanted - set(out)
    if missing:
        raise InvalidParams(f"manifest names unknown slices: {sorted(missing)[:3]}")
    return ordered


def slice_rng_key(slice_id: str) -> int:
    """Stable integer key for per-slice RNG stream derivation."""
    return zlib.crc32(slice_id.encode())


# ---------------------------------------------------------------------------
# Weight-map cache

class WeightMapCache:
    """Disk cache of precomputed weight maps keyed by (slice_id, config).

    Writes are atomic per key (temp file + rename); concurrent writers all
    compute identical values so last-writer-wins is safe.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, slice_id: str, config: WeightConfig) -> Path:
        key = f"{slice_id}-{config.digest()}"
        safe = f"{zlib.crc32(key.encode()):08x}-{key[-40:]}"
        safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in safe)
        return self.root / f"{safe}.wmap"

    def store(self, slice_id: str, config: WeightConfig, wmap: WeightMap) -> None:
        path = self._path(slice_id, config)
        tmp = path.with_suffix(f".tmp{os.getpid()}")
        save_weight_map(tmp, wmap)
        os.replace(tmp, path)

    def load(self, slice_id: str, config: WeightConfig) -> WeightMap:
        path = self._path(slice_id, config)
        if not path.exists():
            raise CacheMiss(f"no cached weight map for {slice_id}")
        return load_weight_map(path)
