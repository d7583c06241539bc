"""Image container, PNG I/O, resizing, and dataset manifests.

Pixels live in linear containers as float64 in [0, 1], channel order RGB,
interpreted as sRGB values. Row 0 is the top of the picture. All resampling
in the engine goes through the bilinear kernel defined here.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import ArgumentError, DatasetError, FormatError, ImageIOError

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True, eq=False)
class Image:
    """Immutable H x W x 3 pixel grid, float64 in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.array(self.pixels, dtype=np.float64, copy=True)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ArgumentError(f"expected an HxWx3 array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ArgumentError(f"image must have at least one pixel, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ArgumentError("pixel values must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ArgumentError("pixel values must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self) -> str:
        return f"Image({self.height}x{self.width})"


@dataclass(frozen=True)
class LabeledImage:
    image: Image
    label: int
    id: str

    def __post_init__(self) -> None:
        if self.label < 0:
            raise ArgumentError(f"label must be non-negative, got {self.label}")
        if not self.id:
            raise ArgumentError("image id must be non-empty")


def constant_image(height: int, width: int, value) -> Image:
    """Uniform image; `value` is a scalar or an RGB triple."""
    rgb = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))
    px = np.empty((height, width, 3), dtype=np.float64)
    px[:] = rgb
    return Image(px)


def load_png(path) -> Image:
    """Decode an 8- or 16-bit RGB/RGBA PNG. Alpha is composited over white."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    if not data.startswith(_PNG_SIGNATURE):
        raise FormatError(f"{path} is not a PNG file (bad signature)")
    raw = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"{path}: PNG stream failed to decode")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"{path}: unsupported PNG sample type {raw.dtype}")
    if raw.ndim != 3 or raw.shape[2] not in (3, 4):
        shape = raw.shape if raw.ndim != 2 else f"{raw.shape} (grayscale)"
        raise FormatError(f"{path}: expected RGB or RGBA samples, got shape {shape}")
    px = raw.astype(np.float64) / scale
    if raw.shape[2] == 3:
        rgb = px[:, :, ::-1]  # cv2 decodes as BGR
    else:
        alpha = px[:, :, 3:4]
        rgb = px[:, :, 2::-1] * alpha + (1.0 - alpha)
    return Image(rgb)


def encode_png(image: Image) -> bytes:
    """8-bit PNG bytes for `image` (quantization error at most 1/255 per channel)."""
    arr = np.rint(image.pixels * 255.0).astype(np.uint8)
    ok, buf = cv2.imencode(".png", arr[:, :, ::-1])
    if not ok:
        raise ImageIOError("PNG encoding failed")
    return buf.tobytes()


def save_png(image: Image, path) -> None:
    path = Path(path)
    data = encode_png(image)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def resize_bilinear(image: Image, new_height: int, new_width: int) -> Image:
    """Resample with the separable bilinear kernel, half-pixel centers, edge clamp."""
    if new_height < 1 or new_width < 1:
        raise ArgumentError(f"target size must be positive, got {new_height}x{new_width}")
    src = image.pixels
    h, w = src.shape[:2]
    if (new_height, new_width) == (h, w):
        return image
    rows = np.clip((np.arange(new_height) + 0.5) * (h / new_height) - 0.5, 0.0, h - 1.0)
    cols = np.clip((np.arange(new_width) + 0.5) * (w / new_width) - 0.5, 0.0, w - 1.0)
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None, None]
    fc = (cols - c0)[None, :, None]
    # a + (b - a) * t keeps constant inputs bit-exact, unlike the two-product form
    top = src[r0][:, c0] + (src[r0][:, c1] - src[r0][:, c0]) * fc
    bot = src[r1][:, c0] + (src[r1][:, c1] - src[r1][:, c0]) * fc
    out = top + (bot - top) * fr
    return Image(np.clip(out, 0.0, 1.0))


def inscribed_square_crop(image: Image) -> Image:
    """Center crop to the axis-aligned square inscribed in the centered disk.

    The kept square has side floor(min(H, W) / sqrt(2)), so its content stays
    inside the inscribed disk under any in-place rotation of the original frame.
    """
    h, w = image.height, image.width
    side = int(min(h, w) / np.sqrt(2.0))
    if side < 1:
        raise ArgumentError(f"image {h}x{w} too small for an inscribed-disk crop")
    r0 = (h - side) // 2
    c0 = (w - side) // 2
    return Image(image.pixels[r0 : r0 + side, c0 : c0 + side])


def disk_mask(height: int, width: int) -> np.ndarray:
    """Boolean H x W mask of the centered inscribed disk."""
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    radius = min(height, width) / 2.0
    rr, cc = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return (rr - cy) ** 2 + (cc - cx) ** 2 <= radius**2


def apply_disk_mask(image: Image, fill=(0.0, 0.0, 0.0)) -> Image:
    mask = disk_mask(image.height, image.width)
    px = image.pixels.copy()
    px[~mask] = np.asarray(fill, dtype=np.float64)
    return Image(px)


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: Path
    label: int


def read_manifest(path) -> list[ManifestEntry]:
    """Parse a `id,path,label` CSV manifest; relative paths resolve against it."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["id", "path", "label"]:
            raise DatasetError(f"{path}: manifest header must be exactly 'id,path,label', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DatasetError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            image_id, rel, label_text = (c.strip() for c in row)
            try:
                label = int(label_text)
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: label {label_text!r} is not an integer") from exc
            if label < 0:
                raise DatasetError(f"{path}:{lineno}: label must be non-negative, got {label}")
            if not image_id:
                raise DatasetError(f"{path}:{lineno}: empty image id")
            img_path = Path(rel)
            if not img_path.is_absolute():
                img_path = path.parent / img_path
            entries.append(ManifestEntry(id=image_id, path=img_path, label=label))
    if not entries:
        raise DatasetError(f"{path}: manifest lists no images")
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise DatasetError(f"{path}: duplicate image ids in manifest")
    return entries


def load_manifest_images(path) -> list[LabeledImage]:
    out = []
    for entry in read_manifest(path):
        try:
            img = load_png(entry.path)
        except (ImageIOError, FormatError) as exc:
            raise DatasetError(f"manifest entry {entry.id}: {exc}") from exc
        out.append(LabeledImage(image=img, label=entry.label, id=entry.id))
    return out
