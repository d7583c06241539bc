"""Synthetic scoring backends and closed-form test functions.

These stand in for real foundation models: each one exposes the same
EnergyBackend surface but computes an analytic quantity whose minimizer is
known by construction, so search behavior can be asserted against oracles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .energy import EnergyBackend, Logits
from .errors import ArgumentError
from .imgcore import Image
from .transforms import Synthetic, TransformDomain, circular_distance_deg
from . import fixtures

PROBE_RGB = fixtures.PROBE_RGB
PROBE_GRAY = fixtures.PROBE_GRAY


class CallableBackend(EnergyBackend):
    """Ad-hoc backend from plain callables; handy in tests."""

    def __init__(self, logits_fn=None, denoise_fn=None, descriptor="callable"):
        self._logits_fn = logits_fn
        self._denoise_fn = denoise_fn
        self.descriptor = descriptor

    def logits(self, image, prompts):
        if self._logits_fn is None:
            raise ArgumentError(f"{self.descriptor} has no logits function")
        return Logits(np.asarray(self._logits_fn(image, prompts), dtype=np.float64))

    def denoise_error(self, image, timestep, noise_seed):
        if self._denoise_fn is None:
            raise ArgumentError(f"{self.descriptor} has no denoise function")
        return float(self._denoise_fn(image, timestep, noise_seed))


class ConstantBackend(EnergyBackend):
    descriptor = "constant"

    def __init__(self, logit_value: float = 0.0, denoise_value: float = 1.0):
        self.logit_value = float(logit_value)
        self.denoise_value = float(denoise_value)

    def logits(self, image, prompts):
        return Logits(np.full(len(prompts), self.logit_value))

    def denoise_error(self, image, timestep, noise_seed):
        return self.denoise_value


class SeededNoiseBackend(EnergyBackend):
    """denoise_error is a Gaussian draw keyed only by the noise seed; used to
    check Monte Carlo averaging behavior (variance shrinks like 1/K)."""

    descriptor = "seeded-noise"

    def __init__(self, loc: float = 1.0, scale: float = 1.0):
        self.loc = float(loc)
        self.scale = float(scale)

    def logits(self, image, prompts):
        return Logits(np.zeros(len(prompts)))

    def denoise_error(self, image, timestep, noise_seed):
        return float(np.random.default_rng(noise_seed).normal(self.loc, self.scale))


class MaskCorrelationBackend(EnergyBackend):
    """Energy = sum(image * mask) with a seeded random mask per frame size.

    Deterministic and wildly orientation-sensitive, so the orbit minimum of a
    random image under rotation is unique with probability one; the backend
    behind the exact-invariance checks.
    """

    descriptor = "mask-correlation"

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._masks: dict[tuple[int, int], np.ndarray] = {}

    def _mask(self, h: int, w: int) -> np.ndarray:
        key = (h, w)
        if key not in self._masks:
            self._masks[key] = np.random.default_rng((self.seed, h, w)).random((h, w, 3))
        return self._masks[key]

    def _score(self, image: Image) -> float:
        return float(np.sum(image.pixels * self._mask(image.height, image.width)))

    def logits(self, image, prompts):
        return Logits(np.full(len(prompts), self._score(image)))

    def denoise_error(self, image, timestep, noise_seed):
        return self._score(image)


class UprightnessBackend(EnergyBackend):
    """Scores the blob fixture: low denoise_error when the bright blob points
    up, logits keyed to the blob's intensity class.

    denoise_error = circular distance (degrees) of the above-background
    intensity centroid from straight up, divided by 180, so it lives in
    [0, 1] and is exactly 0 for an upright blob. Ignores timestep and seed.
    """

    descriptor = "uprightness"

    def __init__(self, n_classes: int = 4, background: float = fixtures.BLOB_BACKGROUND):
        if n_classes < 1:
            raise ArgumentError(f"n_classes must be >= 1, got {n_classes}")
        self.n_classes = int(n_classes)
        self.background = float(background)
        self._readout_ref: dict[int, np.ndarray] = {}

    def denoise_error(self, image, timestep, noise_seed):
        px = image.pixels.mean(axis=2)
        h, w = px.shape
        weights = np.clip(px - (self.background + 0.1), 0.0, None)
        total = weights.sum()
        if total <= 0.0:
            return 1.0
        rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        r_bar = float((weights * rr).sum() / total)
        c_bar = float((weights * cc).sum() / total)
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        angle = math.degrees(math.atan2(cy - r_bar, c_bar - cx))
        return circular_distance_deg(angle, 90.0) / 180.0

    def _reference_means(self, size: int) -> np.ndarray:
        if size not in self._readout_ref:
            refs = [
                fixtures.readout_mean(
                    fixtures.blob_image(
                        size,
                        seed=0,
                        peak=fixtures.class_peak(k, self.n_classes),
                        texture_amp=0.0,
                    )
                )
                for k in range(self.n_classes)
            ]
            self._readout_ref[size] = np.asarray(refs)
        return self._readout_ref[size]

    def logits(self, image, prompts):
        if len(prompts) > self.n_classes:
            raise ArgumentError(
                f"{len(prompts)} prompts but backend knows {self.n_classes} classes"
            )
        ref = self._reference_means(image.height)[: len(prompts)]
        observed = fixtures.readout_mean(image)
        return Logits(-np.abs(observed - ref))


class ChromaProbeBackend(EnergyBackend):
    """Scores the color-probe fixture.

    The fixture's top strip is a known constant color, so any accumulated
    per-channel gains can be read off the strip's channel ratios;
    denoise_error is the squared log-ratio residual (an exact paraboloid in
    applied log-chroma, minimized when candidate gains cancel the
    corruption). Logits compare the class strip's normalized direction to
    each known class color, which makes them immune to the uniform darkening
    a corrupt-then-invert round trip leaves behind.
    """

    descriptor = "chroma-probe"

    def denoise_error(self, image, timestep, noise_seed):
        u, v = self._gain_logs(image)
        return u * u + v * v

    @staticmethod
    def _gain_logs(image: Image) -> tuple[float, float]:
        pm = fixtures.probe_strip_mean(image)
        if pm.min() <= 0.0:
            return 50.0, 50.0  # saturated probe; effectively infinite energy
        u = math.log(pm[0] / pm[1]) - math.log(PROBE_RGB[0] / PROBE_RGB[1])
        v = math.log(pm[2] / pm[1]) - math.log(PROBE_RGB[2] / PROBE_RGB[1])
        return u, v

    def logits(self, image, prompts):
        triples = fixtures.class_triples(len(prompts))
        observed = fixtures.class_strip_mean(image)
        norm = np.linalg.norm(observed)
        if norm == 0.0:
            return Logits(np.full(len(prompts), -10.0))
        direction = observed / norm
        refs = triples / np.linalg.norm(triples, axis=1, keepdims=True)
        return Logits(-np.linalg.norm(refs - direction, axis=1))


class GammaProbeBackend(EnergyBackend):
    """Scores the contrast-probe fixture.

    The probe strip is a known constant gray, so the total gamma currently
    baked into the image is log(strip mean) / log(gray); denoise_error is the
    absolute total log-gamma, a V shape minimized when the candidate inverts
    the corruption. Logits compare the raw class strip to the known class
    colors (deliberately not probe-corrected, so corruption hurts accuracy).
    """

    descriptor = "gamma-probe"

    def denoise_error(self, image, timestep, noise_seed):
        pm = float(fixtures.probe_strip_mean(image).mean())
        if not 0.0 < pm < 1.0:
            return 50.0
        total_gamma = math.log(pm) / math.log(PROBE_GRAY)
        return abs(math.log(total_gamma))

    def logits(self, image, prompts):
        triples = fixtures.class_triples(len(prompts))
        observed = fixtures.class_strip_mean(image)
        return Logits(-np.linalg.norm(triples - observed, axis=1))


SYNTHETIC_BACKENDS: dict[str, Callable[..., EnergyBackend]] = {
    "constant": ConstantBackend,
    "seeded-noise": SeededNoiseBackend,
    "mask": MaskCorrelationBackend,
    "uprightness": UprightnessBackend,
    "chroma-probe": ChromaProbeBackend,
    "gamma-probe": GammaProbeBackend,
}


def make_synthetic_backend(name: str, **params) -> EnergyBackend:
    if name not in SYNTHETIC_BACKENDS:
        known = ", ".join(sorted(SYNTHETIC_BACKENDS))
        raise ArgumentError(f"unknown synthetic backend {name!r}; known: {known}")
    return SYNTHETIC_BACKENDS[name](**params)


# ---------------------------------------------------------------------------
# Closed-form functions for optimizer benchmarks, d in {1, 2, 6}.

_BOWL_CENTER = (0.31, -0.17, 0.23, -0.41, 0.11, -0.29)
_BASIN_DEEP = -0.5
_BASIN_SHALLOW = 0.55
_BASIN_WIDTH_SQ = 0.02


@dataclass(frozen=True)
class SyntheticFunction:
    """A named objective over a box, with its analytic minimizer.

    fn maps (..., dim) arrays to (...) values so oracles can batch.
    """

    name: str
    dim: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    fn: Callable[[np.ndarray], np.ndarray]
    minimizer: tuple[float, ...]
    min_value: float

    def domain(self) -> TransformDomain:
        return TransformDomain.box(Synthetic(self.dim), self.lower, self.upper)

    def __call__(self, x) -> float:
        return float(self.fn(np.asarray(x, dtype=np.float64)))

    def batch(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(X, dtype=np.float64)), dtype=np.float64)


def _bowl(dim: int) -> SyntheticFunction:
    center = np.asarray(_BOWL_CENTER[:dim])
    return SyntheticFunction(
        name=f"bowl{dim}",
        dim=dim,
        lower=(-1.0,) * dim,
        upper=(1.0,) * dim,
        fn=lambda x, c=center: np.sum((x - c) ** 2, axis=-1),
        minimizer=tuple(center),
        min_value=0.0,
    )


def _two_basin_value(x: np.ndarray) -> np.ndarray:
    v = x[..., 0]
    deep = 0.9 * np.exp(-((v - _BASIN_DEEP) ** 2) / _BASIN_WIDTH_SQ)
    shallow = 0.7 * np.exp(-((v - _BASIN_SHALLOW) ** 2) / _BASIN_WIDTH_SQ)
    return 1.0 - deep - shallow


SYNTHETIC_FUNCTIONS: dict[str, SyntheticFunction] = {
    "bowl1": _bowl(1),
    "bowl2": _bowl(2),
    "bowl6": _bowl(6),
    "two-basin": SyntheticFunction(
        name="two-basin",
        dim=1,
        lower=(-1.0,),
        upper=(1.0,),
        fn=_two_basin_value,
        minimizer=(_BASIN_DEEP,),
        min_value=float(_two_basin_value(np.array([_BASIN_DEEP]))),
    ),
}


def get_synthetic_function(name: str) -> SyntheticFunction:
    if name not in SYNTHETIC_FUNCTIONS:
        known = ", ".join(sorted(SYNTHETIC_FUNCTIONS))
        raise ArgumentError(f"unknown synthetic function {name!r}; known: {known}")
    return SYNTHETIC_FUNCTIONS[name]


def _oracle_grid(func: SyntheticFunction, per_dim: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(func.lower, func.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def grid_oracle_min(func: SyntheticFunction, per_dim: int) -> float:
    """Exhaustive minimum over an inclusive per_dim^dim grid."""
    return float(func.batch(_oracle_grid(func, per_dim)).min())


def grid_oracle_argmin(func: SyntheticFunction, per_dim: int) -> np.ndarray:
    pts = _oracle_grid(func, per_dim)
    return pts[int(np.argmin(func.batch(pts)))]


def random_oracle_min(func: SyntheticFunction, n: int, seed: int = 0) -> float:
    """Random-search oracle for dimensions where dense grids are infeasible."""
    rng = np.random.default_rng(seed)
    lo = np.asarray(func.lower)
    hi = np.asarray(func.upper)
    best = math.inf
    remaining = n
    while remaining > 0:
        take = min(65536, remaining)
        pts = lo + rng.random((take, func.dim)) * (hi - lo)
        best = min(best, float(func.batch(pts).min()))
        remaining -= take
    return best
