"""Self-contained scoring models loaded from a weights archive.

A deterministic, dependency-light stand-in for hosted foundation models:
an image/text embedding pair scored by cosine similarity, and a denoiser
whose prediction blends a smoothness prior with a fixed vertical-gradient
template (bright-at-the-top scenes read as more natural). Weights live in
an .npz archive so runs are reproducible across machines.

Archive keys (format_version 1): proj (embed_dim x 3*enc*enc), token_salt,
template (lat x lat x 3), blur_sigma, template_weight, enc_size, lat_size.
"""
from __future__ import annotations

import hashlib
import math
from pathlib import Path

import numpy as np
import scipy.ndimage

from .energy import EnergyBackend, Logits, NoiseSchedule, alpha_bar, noisy_input
from .errors import ArgumentError, BackendError, FormatError
from .imgcore import Image, resize_bilinear

FORMAT_VERSION = 1


def make_toy_weights(
    path,
    seed: int = 0,
    embed_dim: int = 64,
    enc_size: int = 32,
    lat_size: int = 64,
    blur_sigma: float = 1.5,
    template_weight: float = 0.2,
) -> Path:
    """Generate and save a weights archive; pure function of its arguments."""
    if embed_dim < 2 or enc_size < 4 or lat_size < 4:
        raise ArgumentError("embed_dim >= 2, enc_size >= 4, lat_size >= 4 required")
    rng = np.random.default_rng((seed, 0x746F79))
    proj = rng.standard_normal((embed_dim, 3 * enc_size * enc_size)) / math.sqrt(
        3 * enc_size * enc_size
    )
    # latent-space template: bright sky fading downward, in [-1, 1]
    rows = np.linspace(1.0, -1.0, lat_size)
    template = np.repeat(np.repeat(rows[:, None], lat_size, axis=1)[:, :, None], 3, axis=2)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        format_version=np.int64(FORMAT_VERSION),
        proj=proj,
        token_salt=np.int64(seed),
        template=template,
        blur_sigma=np.float64(blur_sigma),
        template_weight=np.float64(template_weight),
        enc_size=np.int64(enc_size),
        lat_size=np.int64(lat_size),
    )
    return path


def _text_embedding(text: str, salt: int, embed_dim: int) -> np.ndarray:
    """Token-bag embedding: each token hashes to a seeded Gaussian vector."""
    tokens = text.lower().split() or [""]
    acc = np.zeros(embed_dim)
    for tok in tokens:
        digest = hashlib.blake2b(
            tok.encode("utf-8"), digest_size=8, salt=int(salt).to_bytes(8, "little", signed=True)
        ).digest()
        acc += np.random.default_rng(int.from_bytes(digest, "little")).standard_normal(embed_dim)
    acc /= len(tokens)
    norm = np.linalg.norm(acc)
    return acc / norm if norm > 0 else acc


class LocalModelBackend(EnergyBackend):
    """EnergyBackend over a toy weights archive; see module docstring."""

    def __init__(self, weights_path, schedule: NoiseSchedule):
        weights_path = Path(weights_path)
        if not weights_path.is_file():
            raise BackendError(f"weights archive not found: {weights_path}")
        try:
            arch = np.load(weights_path)
        except Exception as exc:
            raise FormatError(f"cannot load weights archive {weights_path}: {exc}") from exc
        try:
            version = int(arch["format_version"])
            if version != FORMAT_VERSION:
                raise FormatError(
                    f"{weights_path}: format_version {version}, expected {FORMAT_VERSION}"
                )
            self.proj = np.asarray(arch["proj"], dtype=np.float64)
            self.token_salt = int(arch["token_salt"])
            self.template = np.asarray(arch["template"], dtype=np.float64)
            self.blur_sigma = float(arch["blur_sigma"])
            self.template_weight = float(arch["template_weight"])
            self.enc_size = int(arch["enc_size"])
            self.lat_size = int(arch["lat_size"])
        except KeyError as exc:
            raise FormatError(f"{weights_path}: missing weights key {exc}") from exc
        self.schedule = schedule
        self.descriptor = f"local:{weights_path.name}"

    def _image_embedding(self, image: Image) -> np.ndarray:
        small = resize_bilinear(image, self.enc_size, self.enc_size)
        flat = small.pixels.reshape(-1) - 0.5
        emb = self.proj @ flat
        norm = np.linalg.norm(emb)
        return emb / norm if norm > 0 else emb

    def logits(self, image, prompts):
        if not prompts:
            raise ArgumentError("prompts must be non-empty")
        img_emb = self._image_embedding(image)
        txt = np.stack(
            [_text_embedding(p, self.token_salt, self.proj.shape[0]) for p in prompts]
        )
        return Logits(txt @ img_emb)

    def denoise_error(self, image, timestep, noise_seed):
        z = 2.0 * resize_bilinear(image, self.lat_size, self.lat_size).pixels - 1.0
        noise = np.random.default_rng(noise_seed).standard_normal(z.shape)
        x_t = noisy_input(z, timestep, noise, self.schedule)
        abar = alpha_bar(self.schedule, timestep)
        # denoiser estimate: mostly "the clean image is a smoothed x_t",
        # nudged toward the vertical-gradient template
        blurred = scipy.ndimage.gaussian_filter(x_t, sigma=(self.blur_sigma, self.blur_sigma, 0.0))
        z_hat = (1.0 - self.template_weight) * blurred / math.sqrt(
            abar
        ) + self.template_weight * self.template
        eps_hat = (x_t - math.sqrt(abar) * z_hat) / math.sqrt(1.0 - abar)
        return float(np.mean((eps_hat - noise) ** 2))
