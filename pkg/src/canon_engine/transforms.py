"""Parameterized image transforms and the search domains built over them.

A transform kind tags a parameter space: rotation angle in degrees,
log-chromaticity lighting shifts, log-gamma contrast, compositions of
those, or a pure parameter space with no image action. Domains are either
explicit point lists (Discrete) or axis-aligned boxes (Box).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DimensionMismatch
from .imgcore import Image

# Visual convention: positive angles turn picture content counterclockwise,
# with row 0 displayed at the top.


@dataclass(frozen=True)
class TransformPoint:
    """A point in transform-parameter space."""

    params: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.params)
        if any(not math.isfinite(v) for v in vals):
            raise ArgumentError(f"parameters must be finite, got {vals}")
        object.__setattr__(self, "params", vals)

    @property
    def dim(self) -> int:
        return len(self.params)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.params, dtype=np.float64)


class TransformKind:
    """Base tag; subclasses define dimensionality and image action."""

    dim: int = 0
    acts_on_image: bool = True

    def apply(self, params: tuple[float, ...], image: Image) -> Image:
        raise NotImplementedError


def _check_fill(fill) -> tuple[float, float, float]:
    vals = tuple(float(v) for v in fill)
    if len(vals) != 3 or any(not (0.0 <= v <= 1.0) for v in vals):
        raise ArgumentError(f"fill must be an RGB triple in [0, 1], got {fill}")
    return vals


@dataclass(frozen=True)
class RotationDeg(TransformKind):
    """In-place rotation by params[0] degrees; frame size is preserved."""

    fill: tuple[float, float, float] = (0.0, 0.0, 0.0)
    dim = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "fill", _check_fill(self.fill))

    def apply(self, params, image):
        return rotate(image, params[0], fill=self.fill)


@dataclass(frozen=True)
class ColorLogChroma(TransformKind):
    """Per-channel lighting scale from log-chromaticity (params L_u, L_v)."""

    dim = 2

    def apply(self, params, image):
        return apply_color(image, params[0], params[1])


@dataclass(frozen=True)
class GammaLog(TransformKind):
    """Pointwise contrast p ** exp(params[0])."""

    dim = 1

    def apply(self, params, image):
        return apply_gamma(image, params[0])


@dataclass(frozen=True)
class Composite(TransformKind):
    """Members applied in order, consuming their parameter slices in order."""

    members: tuple[TransformKind, ...] = ()

    def __post_init__(self) -> None:
        members = tuple(self.members)
        if not members:
            raise ArgumentError("composite needs at least one member")
        object.__setattr__(self, "members", members)

    @property
    def dim(self) -> int:  # type: ignore[override]
        return sum(m.dim for m in self.members)

    @property
    def acts_on_image(self) -> bool:  # type: ignore[override]
        return any(m.acts_on_image for m in self.members)

    def apply(self, params, image):
        out = image
        offset = 0
        for member in self.members:
            out = member.apply(params[offset : offset + member.dim], out)
            offset += member.dim
        return out


@dataclass(frozen=True)
class Synthetic(TransformKind):
    """Pure parameter space; applying it leaves the image untouched."""

    n_params: int = 1
    acts_on_image = False

    def __post_init__(self) -> None:
        if self.n_params < 1:
            raise ArgumentError(f"n_params must be >= 1, got {self.n_params}")

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.n_params

    def apply(self, params, image):
        return image


@dataclass(frozen=True)
class TransformDomain:
    """Discrete point list or box [lower, upper] over a transform kind."""

    decoder: TransformKind
    points: tuple[TransformPoint, ...] | None = None
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if (self.points is None) == (self.lower is None):
            raise ArgumentError("domain must define exactly one of points or bounds")
        if self.points is not None:
            pts = tuple(self.points)
            if not pts:
                raise ArgumentError("discrete domain needs at least one point")
            for p in pts:
                if p.dim != self.decoder.dim:
                    raise DimensionMismatch(
                        f"point {p.params} has dim {p.dim}, decoder expects {self.decoder.dim}"
                    )
            object.__setattr__(self, "points", pts)
            return
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper) if self.upper is not None else None
        if hi is None or len(lo) != len(hi):
            raise ArgumentError("box domain needs lower and upper of equal length")
        if len(lo) != self.decoder.dim:
            raise DimensionMismatch(
                f"bounds have dim {len(lo)}, decoder expects {self.decoder.dim}"
            )
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ArgumentError(f"need lower < upper per axis, got {lo} vs {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def discrete(cls, decoder: TransformKind, points) -> "TransformDomain":
        return cls(decoder=decoder, points=tuple(points))

    @classmethod
    def box(cls, decoder: TransformKind, lower, upper) -> "TransformDomain":
        return cls(decoder=decoder, lower=tuple(lower), upper=tuple(upper))

    @property
    def is_discrete(self) -> bool:
        return self.points is not None

    @property
    def dim(self) -> int:
        return self.decoder.dim


def _bilinear_sample(src: np.ndarray, rows: np.ndarray, cols: np.ndarray, fill) -> np.ndarray:
    """Sample src at fractional (row, col); coordinates outside the grid read fill."""
    h, w = src.shape[:2]
    fill_px = np.asarray(fill, dtype=np.float64)
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = (rows - r0)[..., None]
    fc = (cols - c0)[..., None]

    def tap(r, c):
        vals = src[np.clip(r, 0, h - 1), np.clip(c, 0, w - 1)]
        outside = (r < 0) | (r >= h) | (c < 0) | (c >= w)
        return np.where(outside[..., None], fill_px, vals)

    v00 = tap(r0, c0)
    v01 = tap(r0, c0 + 1)
    v10 = tap(r0 + 1, c0)
    v11 = tap(r0 + 1, c0 + 1)
    top = v00 + (v01 - v00) * fc
    bot = v10 + (v11 - v10) * fc
    return top + (bot - top) * fr


def rotate(image: Image, angle_deg: float, fill=(0.0, 0.0, 0.0)) -> Image:
    """Rotate content counterclockwise about the frame center, same frame size.

    Content leaving the frame is lost; uncovered corners take the fill color.
    Square frames rotated by multiples of 90 degrees reduce to an exact
    pixel permutation.
    """
    if not math.isfinite(angle_deg):
        raise ArgumentError(f"angle must be finite, got {angle_deg}")
    fill = _check_fill(fill)
    a = float(angle_deg) % 360.0
    if a == 0.0:
        return image
    src = image.pixels
    h, w = src.shape[:2]
    quarter_turns = a % 90.0 == 0.0
    if quarter_turns and h == w:
        return Image(np.rot90(src, k=int(a // 90.0)))
    if quarter_turns:
        k = int(a // 90.0) % 4
        cos_t = (1.0, 0.0, -1.0, 0.0)[k]
        sin_t = (0.0, 1.0, 0.0, -1.0)[k]
    else:
        theta = math.radians(a)
        cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ro, co = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    xo = co - cx
    yo = ro - cy
    # inverse map of a visual-CCW rotation, in row/col coordinates
    xi = cos_t * xo - sin_t * yo + cx
    yi = sin_t * xo + cos_t * yo + cy
    out = _bilinear_sample(src, yi, xi, fill)
    return Image(np.clip(out, 0.0, 1.0))


def circular_distance_deg(a: float, b: float) -> float:
    """Shortest angular distance between two headings, in [0, 180]."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def illuminant_from_chroma(log_u: float, log_v: float) -> np.ndarray:
    """Unit-norm RGB illuminant (exp(-L_u), 1, exp(-L_v)) / z with z the 2-norm."""
    if not (math.isfinite(log_u) and math.isfinite(log_v)):
        raise ArgumentError(f"log-chromaticities must be finite, got ({log_u}, {log_v})")
    r = math.exp(-log_u)
    b = math.exp(-log_v)
    z = math.sqrt(r * r + 1.0 + b * b)
    return np.array([r / z, 1.0 / z, b / z], dtype=np.float64)


def apply_color(image: Image, log_u: float, log_v: float) -> Image:
    """Scale channels by the unit illuminant; every component is <= 1, so the
    result never needs more than a defensive clamp."""
    gains = illuminant_from_chroma(log_u, log_v)
    return Image(np.clip(image.pixels * gains, 0.0, 1.0))


def apply_gamma(image: Image, log_gamma: float) -> Image:
    """Raise pixels to the power exp(log_gamma); monotone on [0, 1]."""
    if not math.isfinite(log_gamma):
        raise ArgumentError(f"log_gamma must be finite, got {log_gamma}")
    g = math.exp(log_gamma)
    return Image(np.power(image.pixels, g))


def apply_point(kind: TransformKind, point: TransformPoint, image: Image) -> Image:
    if point.dim != kind.dim:
        raise DimensionMismatch(
            f"point has {point.dim} parameters, {type(kind).__name__} expects {kind.dim}"
        )
    return kind.apply(point.params, image)


def enumerate_cn(n: int, fill=(0.0, 0.0, 0.0)) -> TransformDomain:
    """Discrete rotation domain over the cyclic group C_n: angles 360k/n, k < n."""
    if n < 1:
        raise ArgumentError(f"group order must be >= 1, got {n}")
    points = tuple(TransformPoint((360.0 * k / n,)) for k in range(n))
    return TransformDomain.discrete(RotationDeg(fill=fill), points)


def sample_uniform(domain: TransformDomain, count: int, seed: int) -> list[TransformPoint]:
    """`count` points drawn uniformly from a box domain, reproducible by seed."""
    if domain.is_discrete:
        raise ArgumentError("uniform sampling needs a box domain")
    if count < 0:
        raise ArgumentError(f"count must be >= 0, got {count}")
    lo = np.asarray(domain.lower)
    hi = np.asarray(domain.upper)
    rng = np.random.default_rng(seed)
    u = rng.random((count, domain.dim))
    pts = lo + u * (hi - lo)
    return [TransformPoint(tuple(row)) for row in pts]


def grid_points(domain: TransformDomain, per_dim) -> list[TransformPoint]:
    """Inclusive axis grids with per_dim[i] points; a single point sits at the
    axis midpoint. First axis varies slowest."""
    if domain.is_discrete:
        raise ArgumentError("grids are defined over box domains")
    counts = tuple(int(c) for c in per_dim)
    if len(counts) != domain.dim:
        raise DimensionMismatch(
            f"per_dim has {len(counts)} entries, domain has dim {domain.dim}"
        )
    if any(c < 1 for c in counts):
        raise ArgumentError(f"per_dim entries must be >= 1, got {counts}")
    axes = []
    for lo, hi, c in zip(domain.lower, domain.upper, counts):
        if c == 1:
            axes.append(np.array([(lo + hi) / 2.0]))
        else:
            axes.append(np.linspace(lo, hi, c))
    return [TransformPoint(combo) for combo in itertools.product(*axes)]
