"""Vary-and-rank canonicalization: search the transform domain for the
energy minimizer, return the re-posed image plus full accounting."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .energy import EnergyBackend, EnergySpec, Logits, NoiseSchedule, combined_energy
from .errors import ArgumentError, DimensionMismatch
from .imgcore import Image
from .optimize import BoConfig, OptTrace, bo_minimize, grid_minimize
from .transforms import (
    RotationDeg,
    TransformDomain,
    TransformKind,
    TransformPoint,
    apply_point,
    rotate,
)


@dataclass
class CostCounter:
    """Tallies of the work behind one canonicalization: candidate transforms,
    backend logits calls, backend denoise calls, downstream inferences."""

    n_transform: int = 0
    n_logits_calls: int = 0
    n_denoise_calls: int = 0
    n_inference: int = 0

    def add(self, other: "CostCounter") -> None:
        self.n_transform += other.n_transform
        self.n_logits_calls += other.n_logits_calls
        self.n_denoise_calls += other.n_denoise_calls
        self.n_inference += other.n_inference

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.n_transform, self.n_logits_calls, self.n_denoise_calls, self.n_inference)

    def as_dict(self) -> dict:
        return {
            "n_transform": self.n_transform,
            "n_logits_calls": self.n_logits_calls,
            "n_denoise_calls": self.n_denoise_calls,
            "n_inference": self.n_inference,
        }


class _CountingBackend(EnergyBackend):
    """Pass-through wrapper that counts backend traffic."""

    def __init__(self, inner: EnergyBackend, counter: CostCounter):
        self.inner = inner
        self.counter = counter
        self.descriptor = inner.descriptor

    def logits(self, image, prompts):
        self.counter.n_logits_calls += 1
        return self.inner.logits(image, prompts)

    def denoise_error(self, image, timestep, noise_seed):
        self.counter.n_denoise_calls += 1
        return self.inner.denoise_error(image, timestep, noise_seed)


@dataclass(frozen=True)
class CanonResult:
    best_point: TransformPoint
    canonical: Image
    trace: OptTrace
    cost: CostCounter
    spec_digest: str


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def stable_digest(*parts) -> str:
    """sha256 over a canonical JSON encoding of the parts."""
    payload = json.dumps(_jsonable(list(parts)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _search_digest(spec: EnergySpec, domain: TransformDomain, opt: BoConfig | None) -> str:
    domain_desc = {
        "decoder": type(domain.decoder).__name__,
        "points": [p.params for p in domain.points] if domain.is_discrete else None,
        "lower": domain.lower,
        "upper": domain.upper,
    }
    return stable_digest(spec, domain_desc, opt)


def canonicalize(
    image: Image,
    kind: TransformKind,
    domain: TransformDomain,
    spec: EnergySpec,
    schedule: NoiseSchedule | None,
    backend: EnergyBackend,
    opt: BoConfig | None = None,
    score_view: Callable[[Image], Image] | None = None,
) -> CanonResult:
    """Minimize t -> combined_energy(apply_point(kind, t, image)) over the domain.

    Discrete domains are scored exhaustively; box domains run the BO loop
    (opt required). `score_view`, when given, maps each candidate before
    scoring (e.g. an inscribed-disk crop) without affecting the returned
    canonical image. The counter covers search work only; the winning
    transform's final re-application is reconstruction, not search.
    """
    if kind.dim != domain.dim:
        raise DimensionMismatch(
            f"{type(kind).__name__} has dim {kind.dim}, domain has dim {domain.dim}"
        )
    counter = CostCounter()
    counting = _CountingBackend(backend, counter)

    def objective(point: TransformPoint) -> float:
        candidate = apply_point(kind, point, image)
        if kind.acts_on_image:
            counter.n_transform += 1
        scored = score_view(candidate) if score_view is not None else candidate
        return combined_energy(scored, spec, schedule, counting)

    if domain.is_discrete:
        trace = grid_minimize(domain, objective)
    else:
        if opt is None:
            raise ArgumentError("box domains need a BoConfig")
        trace = bo_minimize(domain, objective, opt)
    counter.n_inference = 1  # one downstream prediction per canonicalized image
    canonical = apply_point(kind, trace.best_point, image)
    return CanonResult(
        best_point=trace.best_point,
        canonical=canonical,
        trace=trace,
        cost=counter,
        spec_digest=_search_digest(spec, domain, opt),
    )


def predict(image: Image, prompts: Sequence[str], backend: EnergyBackend) -> tuple[int, Logits]:
    """Argmax zero-shot prediction; exact ties resolve to the first index."""
    if not prompts:
        raise ArgumentError("predict needs at least one prompt")
    lg = backend.logits(image, tuple(prompts))
    return int(np.argmax(lg.values)), lg


def _is_lossless_rotation_domain(domain: TransformDomain, image: Image) -> bool:
    if not domain.is_discrete or not isinstance(domain.decoder, RotationDeg):
        return False
    if image.height != image.width:
        return False
    return all(p.params[0] % 90.0 == 0.0 for p in domain.points)


def invariance_check(
    image: Image,
    kind: TransformKind,
    t_applied: TransformPoint,
    domain: TransformDomain,
    spec: EnergySpec,
    schedule: NoiseSchedule | None,
    backend: EnergyBackend,
    opt: BoConfig | None = None,
    tolerance: float = 2.0 / 255.0,
) -> tuple[bool, dict]:
    """Does canonicalization land on the same image whether or not t_applied
    hit the input first?

    Square frames with 90-degree-multiple rotation domains are lossless, so
    agreement is asserted bit-for-bit; anything else is checked against a
    mean-absolute-error tolerance.
    """
    base = canonicalize(image, kind, domain, spec, schedule, backend, opt)
    transformed = apply_point(kind, t_applied, image)
    other = canonicalize(transformed, kind, domain, spec, schedule, backend, opt)
    exact = _is_lossless_rotation_domain(domain, image) and t_applied.params[0] % 90.0 == 0.0
    mae = float(np.mean(np.abs(base.canonical.pixels - other.canonical.pixels)))
    if exact:
        holds = base.canonical == other.canonical
    else:
        holds = mae <= tolerance
    detail = {
        "mode": "exact" if exact else "approximate",
        "mae": mae,
        "tolerance": None if exact else tolerance,
        "base_point": base.best_point.params,
        "other_point": other.best_point.params,
        "applied_point": t_applied.params,
    }
    return holds, detail


def gate_upright(
    image: Image,
    spec: EnergySpec,
    schedule: NoiseSchedule | None,
    backend: EnergyBackend,
    threshold: float,
    classifier_only: bool = True,
) -> bool:
    """Cheap skip test: compare the input's energy against its 90-degree
    neighbors; true means "already canonical", i.e. both neighbors sit at
    least `threshold` above the input. threshold = +inf disables the gate.

    By default only the classifier term is scored (three logits calls); pass
    classifier_only=False to gate on the full combined energy.
    """
    gate_spec = spec
    if classifier_only and spec.gamma1 != 0.0 and spec.gamma2 != 0.0:
        gate_spec = dataclasses.replace(spec, gamma2=0.0)
    e_0 = combined_energy(image, gate_spec, schedule, backend)
    e_plus = combined_energy(rotate(image, 90.0), gate_spec, schedule, backend)
    e_minus = combined_energy(rotate(image, -90.0), gate_spec, schedule, backend)
    return min(e_plus, e_minus) - e_0 >= threshold


def predicted_cost(
    n_candidates: int,
    timesteps: int,
    mc_samples: int,
    use_classifier: bool,
    use_diffusion: bool,
) -> CostCounter:
    """Analytic cost of an exhaustive discrete run with n_candidates points."""
    if min(n_candidates, timesteps, mc_samples) < 0:
        raise ArgumentError("cost inputs must be nonnegative")
    return CostCounter(
        n_transform=n_candidates,
        n_logits_calls=n_candidates if use_classifier else 0,
        n_denoise_calls=n_candidates * timesteps * mc_samples if use_diffusion else 0,
        n_inference=1,
    )
