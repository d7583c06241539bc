"""Deterministic synthetic images and datasets.

Three families, each paired with a synthetic backend that can read its
structure analytically:

- blob images: a bright Gaussian blob on a dim disk whose direction encodes
  pose and whose peak intensity encodes class (uprightness scoring);
- color-probe images: a known constant color strip plus a class-colored
  strip (log-chroma recovery);
- contrast-probe images: a known constant gray strip plus a class-colored
  strip (log-gamma recovery).

Everything is a pure function of its arguments; datasets regenerate
bit-identically from a seed.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
import scipy.ndimage

from .errors import ArgumentError
from .imgcore import Image, LabeledImage, disk_mask, save_png

BLOB_BACKGROUND = 0.15
BLOB_RADIUS_FRAC = 0.22  # blob center distance from frame center, as a fraction of size
BLOB_SIGMA_FRAC = 0.10
READOUT_RADIUS_FRAC = 0.06
PROBE_RGB = (0.6, 0.5, 0.4)
PROBE_GRAY = 0.5
_TAPER_PX = 3.0

# Distinct channel orderings; class strips use these so chroma/gamma shifts
# move them across decision boundaries.
_CLASS_TRIPLES = (
    (0.70, 0.45, 0.20),
    (0.20, 0.70, 0.45),
    (0.45, 0.20, 0.70),
    (0.70, 0.20, 0.45),
    (0.45, 0.70, 0.20),
    (0.20, 0.45, 0.70),
)


def class_peak(label: int, n_classes: int) -> float:
    """Blob peak amplitude for a class; spaced widely enough that readout
    survives interpolation blur."""
    if not 0 <= label < n_classes:
        raise ArgumentError(f"label {label} outside [0, {n_classes})")
    return 0.45 + 0.4 * label / max(n_classes - 1, 1)


def class_triples(n_classes: int) -> np.ndarray:
    if not 1 <= n_classes <= len(_CLASS_TRIPLES):
        raise ArgumentError(f"n_classes must be in [1, {len(_CLASS_TRIPLES)}], got {n_classes}")
    return np.asarray(_CLASS_TRIPLES[:n_classes], dtype=np.float64)


def _smooth_field(size: int, seed, sigma_frac: float = 0.12) -> np.ndarray:
    """Zero-mean low-frequency field in [-1, 1]."""
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((size, size))
    f = scipy.ndimage.gaussian_filter(f, sigma=size * sigma_frac, mode="wrap")
    f -= f.mean()
    peak = np.max(np.abs(f))
    return f / peak if peak > 0 else f


def _disk_taper(size: int) -> np.ndarray:
    """Smoothstep from 1 inside the inscribed disk to 0 at its rim, so masked
    images have no hard edge for resampling to ring against."""
    cy = cx = (size - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    r = np.sqrt((rr - cy) ** 2 + (cc - cx) ** 2)
    t = np.clip((size / 2.0 - r) / _TAPER_PX, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def blob_image(
    size: int,
    seed,
    peak: float = 0.65,
    pose_deg: float = 90.0,
    background: float = BLOB_BACKGROUND,
    texture_amp: float = 0.04,
) -> Image:
    """Gaussian blob at heading pose_deg (90 = up) on a tapered disk."""
    if size < 8:
        raise ArgumentError(f"size must be >= 8, got {size}")
    base = np.full((size, size), background)
    if texture_amp > 0.0:
        base = base + texture_amp * _smooth_field(size, seed)
    cy = cx = (size - 1) / 2.0
    theta = math.radians(pose_deg)
    br = cy - BLOB_RADIUS_FRAC * size * math.sin(theta)
    bc = cx + BLOB_RADIUS_FRAC * size * math.cos(theta)
    rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    sigma = BLOB_SIGMA_FRAC * size
    blob = peak * np.exp(-((rr - br) ** 2 + (cc - bc) ** 2) / (2.0 * sigma**2))
    field = np.clip(base + blob, 0.0, 1.0) * _disk_taper(size)
    return Image(np.repeat(field[:, :, None], 3, axis=2))


def readout_mean(image: Image) -> float:
    """Mean intensity over the upright blob location's readout disk."""
    size = image.height
    cy = cx = (size - 1) / 2.0
    br = cy - BLOB_RADIUS_FRAC * size  # heading 90: straight up
    rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    sel = (rr - br) ** 2 + (cc - cx) ** 2 <= (READOUT_RADIUS_FRAC * size) ** 2
    return float(image.pixels.mean(axis=2)[sel].mean())


def _strip_rows(size: int) -> int:
    return max(size // 4, 1)


def probe_strip_mean(image: Image) -> np.ndarray:
    return image.pixels[: _strip_rows(image.height)].mean(axis=(0, 1))


def class_strip_mean(image: Image) -> np.ndarray:
    return image.pixels[-_strip_rows(image.height) :].mean(axis=(0, 1))


def _probe_image(size: int, seed, label: int, n_classes: int, probe_color) -> Image:
    rows = _strip_rows(size)
    px = np.empty((size, size, 3))
    px[:] = 0.45 + 0.25 * _smooth_field(size, seed)[:, :, None]
    px[:rows] = np.asarray(probe_color, dtype=np.float64)
    px[-rows:] = class_triples(n_classes)[label]
    return Image(np.clip(px, 0.0, 1.0))


def color_probe_image(size: int, seed, label: int, n_classes: int = 4) -> Image:
    return _probe_image(size, seed, label, n_classes, PROBE_RGB)


def contrast_probe_image(size: int, seed, label: int, n_classes: int = 4) -> Image:
    return _probe_image(size, seed, label, n_classes, (PROBE_GRAY,) * 3)


def random_image(size: int, seed) -> Image:
    """Unstructured uniform noise; the exact-invariance workhorse."""
    return Image(np.random.default_rng(seed).random((size, size, 3)))


def disk_texture_image(size: int, seed) -> Image:
    """Smooth random texture on a tapered disk, black outside."""
    channels = [0.5 + 0.3 * _smooth_field(size, (seed, c)) for c in range(3)]
    px = np.clip(np.stack(channels, axis=2), 0.05, 0.95) * _disk_taper(size)[:, :, None]
    return Image(px)


def nudged_pose(rng: np.random.Generator, n: int) -> float:
    """Random heading kept away from C_n decision boundaries so the nearest
    group angle is unambiguous."""
    step = 360.0 / n
    pose = float(rng.uniform(0.0, 360.0))
    offset = (pose + step / 2.0) % step - step / 2.0  # signed distance to nearest grid angle
    boundary = step / 2.0 - abs(offset)  # distance to the tie line between neighbors
    if boundary < 2.0:
        pose = (pose - math.copysign(4.0, offset)) % 360.0
    return pose


def make_blob_dataset(
    n: int,
    size: int = 64,
    n_classes: int = 4,
    seed: int = 0,
    pose_deg: float | None = 90.0,
) -> list[LabeledImage]:
    """Labeled blob images; pose_deg None draws a nudged random pose per image."""
    out = []
    rng = np.random.default_rng((seed, 0x706F7365))
    for i in range(n):
        label = i % n_classes
        pose = pose_deg if pose_deg is not None else nudged_pose(rng, 8)
        img = blob_image(size, seed=(seed, i), peak=class_peak(label, n_classes), pose_deg=pose)
        out.append(LabeledImage(image=img, label=label, id=f"blob{i:04d}"))
    return out


def make_color_dataset(n: int, size: int = 64, n_classes: int = 4, seed: int = 0) -> list[LabeledImage]:
    return [
        LabeledImage(
            image=color_probe_image(size, (seed, i), i % n_classes, n_classes),
            label=i % n_classes,
            id=f"color{i:04d}",
        )
        for i in range(n)
    ]


def make_contrast_dataset(n: int, size: int = 64, n_classes: int = 4, seed: int = 0) -> list[LabeledImage]:
    return [
        LabeledImage(
            image=contrast_probe_image(size, (seed, i), i % n_classes, n_classes),
            label=i % n_classes,
            id=f"gamma{i:04d}",
        )
        for i in range(n)
    ]


def write_dataset(entries: list[LabeledImage], out_dir) -> Path:
    """Write PNGs plus a `id,path,label` manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "path", "label"])
        for entry in entries:
            name = f"{entry.id}.png"
            save_png(entry.image, out_dir / name)
            writer.writerow([entry.id, name, entry.label])
    return manifest
