"""Energy functions that rank transform candidates.

Two signal families: a prompt-conditioned classifier score (low energy when
the scorer is confident) and a denoising-error score under a forward noising
schedule (low energy when the image looks natural to the denoiser). A
combined energy mixes them with fixed weights; a zero weight means that
family's backend is never called.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ArgumentError,
    BothWeightsZero,
    DimensionMismatch,
    EmptyLogits,
    MissingNormPrompt,
)
from .imgcore import Image

_MASK64 = (1 << 64) - 1
_MASK53 = (1 << 53) - 1


@dataclass(frozen=True, eq=False)
class Logits:
    """1-D float64 score vector, one entry per prompt."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if vals.size == 0:
            raise EmptyLogits("logit vector is empty")
        if not np.all(np.isfinite(vals)):
            raise ArgumentError("logits must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class EnergySpec:
    """Weights and sampling plan for the combined energy.

    gamma1 weighs the classifier term, gamma2 the denoising term. A zero
    weight disables its term entirely, including backend traffic. Prompts
    feed the classifier; timesteps and mc_samples drive the denoising
    average; noise_seed roots the per-(timestep, sample) noise streams.
    """

    alpha: float = 1.0
    beta: float = 0.5
    gamma1: float = 1.0
    gamma2: float = 0.0
    prompts: tuple[str, ...] = ()
    normalizing_prompt: str | None = None
    temperature: float = 1.0
    timesteps: tuple[int, ...] = ()
    mc_samples: int = 1
    noise_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompts", tuple(self.prompts))
        object.__setattr__(self, "timesteps", tuple(int(t) for t in self.timesteps))
        for name in ("alpha", "beta", "gamma1", "gamma2", "temperature"):
            if not math.isfinite(getattr(self, name)):
                raise ArgumentError(f"{name} must be finite")
        if self.temperature <= 0.0:
            raise ArgumentError(f"temperature must be positive, got {self.temperature}")
        if self.mc_samples < 1:
            raise ArgumentError(f"mc_samples must be >= 1, got {self.mc_samples}")
        if self.gamma1 != 0.0 and not self.prompts:
            raise ArgumentError("classifier term enabled (gamma1 != 0) but no prompts given")
        if self.gamma2 != 0.0 and not self.timesteps:
            raise ArgumentError("denoising term enabled (gamma2 != 0) but no timesteps given")
        if any(t < 1 for t in self.timesteps):
            raise ArgumentError(f"timesteps are 1-indexed, got {self.timesteps}")
        if any(b <= a for a, b in zip(self.timesteps, self.timesteps[1:])):
            raise ArgumentError(f"timesteps must be strictly increasing, got {self.timesteps}")


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Forward-noising schedule; alpha_bars[t-1] = prod_{i<=t} (1 - beta_i)."""

    betas: np.ndarray
    alpha_bars: np.ndarray = None  # derived

    def __post_init__(self) -> None:
        betas = np.array(self.betas, dtype=np.float64, copy=True).reshape(-1)
        if betas.size == 0:
            raise ArgumentError("schedule needs at least one step")
        if not np.all((betas > 0.0) & (betas < 1.0)):
            raise ArgumentError("betas must lie strictly inside (0, 1)")
        alpha_bars = np.cumprod(1.0 - betas)
        betas.setflags(write=False)
        alpha_bars.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    @property
    def T(self) -> int:
        return int(self.betas.size)


def make_linear_schedule(T: int = 1000, beta_start: float = 0.00085, beta_end: float = 0.012) -> NoiseSchedule:
    """Linearly spaced betas from beta_start to beta_end inclusive."""
    if T < 1:
        raise ArgumentError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ArgumentError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule(betas=np.linspace(beta_start, beta_end, T))


def alpha_bar(schedule: NoiseSchedule, t: int) -> float:
    """Cumulative signal fraction at 1-indexed step t."""
    if not 1 <= t <= schedule.T:
        raise IndexError(f"timestep {t} outside schedule of length {schedule.T}")
    return float(schedule.alpha_bars[t - 1])


def noisy_input(x: np.ndarray, t: int, noise: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward-noised sample sqrt(abar_t) * x + sqrt(1 - abar_t) * noise."""
    x = np.asarray(x, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x.shape != noise.shape:
        raise DimensionMismatch(f"x has shape {x.shape}, noise has shape {noise.shape}")
    abar = alpha_bar(schedule, t)
    return math.sqrt(abar) * x + math.sqrt(1.0 - abar) * noise


class EnergyBackend(abc.ABC):
    """Anything that can score an image: prompt logits and denoising error."""

    descriptor: str = "backend"

    @abc.abstractmethod
    def logits(self, image: Image, prompts: Sequence[str]) -> Logits:
        """Score `image` against each prompt; returns one logit per prompt."""

    @abc.abstractmethod
    def denoise_error(self, image: Image, timestep: int, noise_seed: int) -> float:
        """Mean squared noise-prediction error at `timestep` with noise drawn
        deterministically from `noise_seed`."""


def classifier_energy(logits: Logits, alpha: float = 1.0, beta: float = 0.5) -> float:
    """alpha * mean(logits) - beta * max(logits)."""
    vals = logits.values
    return float(alpha * vals.mean() - beta * vals.max())


def normalized_classifier_energy(logits: Logits, norm_logit: float, spec: EnergySpec) -> float:
    """Classifier energy on (logits - norm_logit) / temperature.

    Shift-invariant in the raw logits: adding a constant to every class logit
    and to the normalizing logit leaves the value unchanged.
    """
    if spec.normalizing_prompt is None:
        raise MissingNormPrompt("spec.normalizing_prompt must be set for normalized scoring")
    if not math.isfinite(norm_logit):
        raise ArgumentError(f"norm_logit must be finite, got {norm_logit}")
    shifted = Logits((logits.values - norm_logit) / spec.temperature)
    return classifier_energy(shifted, spec.alpha, spec.beta)


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_noise_seed(noise_seed: int, timestep: int, sample_index: int) -> int:
    """Per-(timestep, sample) seed; depends only on its three inputs.

    Two candidates scored under the same spec therefore share noise draws
    (common random numbers), which cancels sampling variance out of their
    energy differences. Masked to 53 bits so the value survives JSON.
    """
    if sample_index < 0:
        raise ArgumentError(f"sample_index must be >= 0, got {sample_index}")
    s = _splitmix64(noise_seed & _MASK64)
    s = _splitmix64((s + timestep) & _MASK64)
    s = _splitmix64((s + sample_index) & _MASK64)
    return s & _MASK53


def diffusion_energy(image: Image, spec: EnergySpec, schedule: NoiseSchedule, backend: EnergyBackend) -> float:
    """Denoising error averaged over spec.timesteps and mc_samples draws."""
    if not spec.timesteps:
        raise ArgumentError("diffusion energy needs at least one timestep")
    for t in spec.timesteps:
        if not 1 <= t <= schedule.T:
            raise IndexError(f"timestep {t} outside schedule of length {schedule.T}")
    total = 0.0
    for t in spec.timesteps:
        per_t = 0.0
        for k in range(spec.mc_samples):
            per_t += backend.denoise_error(image, t, derive_noise_seed(spec.noise_seed, t, k))
        total += per_t / spec.mc_samples
    return total / len(spec.timesteps)


def classifier_component(image: Image, spec: EnergySpec, backend: EnergyBackend) -> float:
    """Classifier energy for `image`, normalized when a normalizing prompt is set.

    With normalization, the normalizing prompt rides along in the same
    backend call as the class prompts, so the call count stays one per image.
    """
    if not spec.prompts:
        raise ArgumentError("classifier energy needs at least one prompt")
    if spec.normalizing_prompt is None:
        return classifier_energy(backend.logits(image, spec.prompts), spec.alpha, spec.beta)
    lg = backend.logits(image, tuple(spec.prompts) + (spec.normalizing_prompt,))
    if len(lg) != len(spec.prompts) + 1:
        raise ArgumentError(
            f"backend returned {len(lg)} logits for {len(spec.prompts) + 1} prompts"
        )
    return normalized_classifier_energy(Logits(lg.values[:-1]), float(lg.values[-1]), spec)


def combined_energy(image: Image, spec: EnergySpec, schedule: NoiseSchedule | None, backend: EnergyBackend) -> float:
    """gamma1 * classifier energy + gamma2 * diffusion energy.

    Terms with zero weight are skipped without touching the backend; both
    zero is rejected because the result would rank nothing.
    """
    if spec.gamma1 == 0.0 and spec.gamma2 == 0.0:
        raise BothWeightsZero("gamma1 and gamma2 are both zero")
    total = 0.0
    if spec.gamma1 != 0.0:
        total += spec.gamma1 * classifier_component(image, spec, backend)
    if spec.gamma2 != 0.0:
        if schedule is None:
            raise ArgumentError("denoising term enabled but no schedule supplied")
        total += spec.gamma2 * diffusion_energy(image, spec, schedule, backend)
    return total
