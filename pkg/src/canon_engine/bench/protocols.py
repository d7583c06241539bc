"""Benchmark protocols: rotation pose recovery, color/contrast sweeps, the
TTA baseline, optimizer-vs-oracle studies, energy and gate evaluation."""
from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..energy import (
    EnergyBackend,
    EnergySpec,
    NoiseSchedule,
    classifier_component,
    diffusion_energy,
)
from ..errors import ArgumentError, EngineError
from ..imgcore import Image, LabeledImage
from ..optimize import BoConfig, bo_minimize
from ..pipeline import CostCounter, canonicalize, gate_upright, predict
from ..synthetic import (
    SyntheticFunction,
    get_synthetic_function,
    grid_oracle_min,
    random_oracle_min,
)
from ..transforms import (
    ColorLogChroma,
    GammaLog,
    TransformDomain,
    apply_color,
    apply_gamma,
    circular_distance_deg,
    enumerate_cn,
    rotate,
)

log = logging.getLogger("canon_engine.bench")


def stable_rng(seed: int, *parts) -> np.random.Generator:
    """Generator keyed by the global seed plus string parts (e.g. an image id),
    so partial runs and reruns corrupt each image identically."""
    material = "|".join([str(seed), *map(str, parts)]).encode("utf-8")
    digest = hashlib.blake2b(material, digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def _map_images(
    entries: Sequence[LabeledImage],
    job: Callable[[LabeledImage], dict],
    workers: int = 1,
) -> tuple[list[dict], int]:
    """Run `job` per image, in manifest order; failures skip the image."""
    results: list[dict] = []
    skipped = 0
    if workers <= 1:
        outcomes = []
        for entry in entries:
            try:
                outcomes.append(job(entry))
            except EngineError as exc:
                outcomes.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(job, entry) for entry in entries]
            outcomes = []
            for future in futures:
                try:
                    outcomes.append(future.result())
                except EngineError as exc:
                    outcomes.append(exc)
    for entry, outcome in zip(entries, outcomes):
        if isinstance(outcome, EngineError):
            log.warning("skipping image %s: %s", entry.id, outcome)
            skipped += 1
        else:
            results.append(outcome)
    return results, skipped


def _accuracy(pairs: list[tuple[int, int]]) -> float:
    if not pairs:
        return 0.0
    return sum(1 for got, want in pairs if got == want) / len(pairs)


# ---------------------------------------------------------------------------
# Rotation


@dataclass
class RotationReport:
    """Per-angle accuracy plus pose-recovery metrics over a C_n sweep."""

    angles: list[float]
    per_angle: dict[float, dict]
    pose_accuracy: float
    pose_error_deg: float
    cost: CostCounter
    n_images: int
    skipped: int
    prompts: tuple[str, ...]
    per_image: list[dict] = field(default_factory=list)
    tta: dict | None = None

    def as_dict(self) -> dict:
        body = {
            "angles": self.angles,
            "per_angle": {f"{a:g}": dict(stats) for a, stats in self.per_angle.items()},
            "pose_accuracy": self.pose_accuracy,
            "pose_error_deg": self.pose_error_deg,
            "cost": self.cost.as_dict(),
            "n_images": self.n_images,
            "skipped": self.skipped,
            "prompts": list(self.prompts),
        }
        if self.tta is not None:
            body["tta"] = dict(self.tta)
        return body


def bench_rotation(
    images: Sequence[LabeledImage],
    n: int,
    spec: EnergySpec,
    schedule: NoiseSchedule | None,
    backend: EnergyBackend,
    prompts: Sequence[str] | None = None,
    fill=(0.0, 0.0, 0.0),
    workers: int = 1,
    score_view: Callable[[Image], Image] | None = None,
) -> RotationReport:
    """Corrupt every image with each C_n rotation, canonicalize over C_n, and
    compare canonical predictions (plus recovered pose) to the baseline."""
    domain = enumerate_cn(n, fill=fill)
    kind = domain.decoder
    angles = [p.params[0] for p in domain.points]
    prompts = tuple(prompts) if prompts is not None else spec.prompts
    if not prompts:
        raise ArgumentError("bench_rotation needs prompts for the downstream prediction")
    step = 360.0 / n

    def job(entry: LabeledImage) -> dict:
        rows = []
        for k, angle in enumerate(angles):
            rotated = rotate(entry.image, angle, fill=fill)
            baseline_label, _ = predict(rotated, prompts, backend)
            res = canonicalize(rotated, kind, domain, spec, schedule, backend, score_view=score_view)
            canon_label, _ = predict(res.canonical, prompts, backend)
            recovered = res.best_point.params[0]
            truth = (360.0 - angle) % 360.0
            recovered_index = int(round(recovered / step)) % n
            truth_index = (n - k) % n
            rows.append(
                {
                    "angle": angle,
                    "baseline_label": baseline_label,
                    "canon_label": canon_label,
                    "recovered_deg": recovered,
                    "pose_ok": recovered_index == truth_index,
                    "pose_error_deg": circular_distance_deg(recovered, truth),
                    "cost": res.cost,
                }
            )
        return {"id": entry.id, "label": entry.label, "rows": rows}

    results, skipped = _map_images(images, job, workers)

    per_angle: dict[float, dict] = {}
    total_cost = CostCounter()
    pose_hits = 0
    pose_err_sum = 0.0
    pose_count = 0
    per_image = []
    for rec in results:
        for row in rec["rows"]:
            stats = per_angle.setdefault(
                row["angle"], {"baseline": [], "canon": [], "n": 0}
            )
            stats["baseline"].append((row["baseline_label"], rec["label"]))
            stats["canon"].append((row["canon_label"], rec["label"]))
            stats["n"] += 1
            pose_hits += 1 if row["pose_ok"] else 0
            pose_err_sum += row["pose_error_deg"]
            pose_count += 1
            total_cost.add(row["cost"])
        per_image.append(
            {
                "id": rec["id"],
                "label": rec["label"],
                "rows": [
                    {k: v for k, v in row.items() if k != "cost"} for row in rec["rows"]
                ],
            }
        )

    summary = {
        angle: {
            "baseline_acc": _accuracy(stats["baseline"]),
            "canon_acc": _accuracy(stats["canon"]),
            "n": stats["n"],
        }
        for angle, stats in per_angle.items()
    }
    return RotationReport(
        angles=angles,
        per_angle=summary,
        pose_accuracy=pose_hits / pose_count if pose_count else 0.0,
        pose_error_deg=pose_err_sum / pose_count if pose_count else 0.0,
        cost=total_cost,
        n_images=len(results),
        skipped=skipped,
        prompts=prompts,
        per_image=per_image,
    )


def bench_tta(
    images: Sequence[LabeledImage],
    n: int,
    views: int,
    backend: EnergyBackend,
    prompts: Sequence[str],
    seed: int = 0,
    fill=(0.0, 0.0, 0.0),
    workers: int = 1,
) -> dict:
    """Test-time augmentation baseline: corrupt each image with a seeded C_n
    rotation, average logits over `views` distinct C_n views, argmax."""
    if not 1 <= views <= n:
        raise ArgumentError(f"views must be in [1, {n}], got {views}")
    prompts = tuple(prompts)
    angles = [360.0 * k / n for k in range(n)]

    def job(entry: LabeledImage) -> dict:
        rng = stable_rng(seed, entry.id, "tta")
        corrupt = angles[int(rng.integers(n))]
        rotated = rotate(entry.image, corrupt, fill=fill)
        picks = rng.choice(n, size=views, replace=False)
        stacked = np.mean(
            [backend.logits(rotate(rotated, angles[int(v)], fill=fill), prompts).values for v in picks],
            axis=0,
        )
        return {
            "id": entry.id,
            "label": entry.label,
            "tta_label": int(np.argmax(stacked)),
            "corrupt_deg": corrupt,
        }

    results, skipped = _map_images(images, job, workers)
    accuracy = _accuracy([(r["tta_label"], r["label"]) for r in results])
    return {
        "views": views,
        "n": n,
        "accuracy": accuracy,
        "n_images": len(results),
        "skipped": skipped,
        "logits_calls_per_image": views,
    }


# ---------------------------------------------------------------------------
# Parameter sweeps (color, contrast)


@dataclass
class SweepReport:
    """Baseline-vs-canonicalized accuracy binned by corruption magnitude."""

    bins: list[dict]
    baseline_accuracy: float
    canon_accuracy: float
    mean_gain: float
    budget_per_image: int
    mean_param_residual: float
    cost: CostCounter
    n_images: int
    skipped: int
    prompts: tuple[str, ...]
    corruption_range: list
    per_image: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "bins": [dict(b) for b in self.bins],
            "baseline_accuracy": self.baseline_accuracy,
            "canon_accuracy": self.canon_accuracy,
            "mean_gain": self.mean_gain,
            "budget_per_image": self.budget_per_image,
            "mean_param_residual": self.mean_param_residual,
            "cost": self.cost.as_dict(),
            "n_images": self.n_images,
            "skipped": self.skipped,
            "prompts": list(self.prompts),
            "corruption_range": self.corruption_range,
        }


def _sweep(
    images: Sequence[LabeledImage],
    spec: EnergySpec,
    schedule: NoiseSchedule | None,
    backend: EnergyBackend,
    opt: BoConfig,
    domain: TransformDomain,
    corrupt_fn: Callable[[Image, np.ndarray], Image],
    sample_corruption: Callable[[np.random.Generator], np.ndarray],
    magnitude_bounds: tuple[float, float],
    prompts: Sequence[str],
    seed: int,
    n_bins: int = 4,
    workers: int = 1,
    tag: str = "sweep",
) -> SweepReport:
    prompts = tuple(prompts)
    kind = domain.decoder

    def job(entry: LabeledImage) -> dict:
        rng = stable_rng(seed, entry.id, tag)
        corruption = sample_corruption(rng)
        corrupted = corrupt_fn(entry.image, corruption)
        baseline_label, _ = predict(corrupted, prompts, backend)
        res = canonicalize(corrupted, kind, domain, spec, schedule, backend, opt=opt)
        canon_label, _ = predict(res.canonical, prompts, backend)
        recovered = np.asarray(res.best_point.params)
        return {
            "id": entry.id,
            "label": entry.label,
            "corruption": corruption.tolist(),
            "magnitude": float(np.linalg.norm(corruption)),
            "baseline_label": baseline_label,
            "canon_label": canon_label,
            "recovered": recovered.tolist(),
            "param_residual": float(np.linalg.norm(corruption + recovered)),
            "budget": len(res.trace),
            "cost": res.cost,
        }

    results, skipped = _map_images(images, job, workers)

    lo, hi = magnitude_bounds
    edges = np.linspace(lo, hi, n_bins + 1)
    bins = []
    for i in range(n_bins):
        in_bin = [
            r
            for r in results
            if (edges[i] <= r["magnitude"] < edges[i + 1])
            or (i == n_bins - 1 and r["magnitude"] == edges[-1])
        ]
        bins.append(
            {
                "lo": float(edges[i]),
                "hi": float(edges[i + 1]),
                "n": len(in_bin),
                "baseline_acc": _accuracy([(r["baseline_label"], r["label"]) for r in in_bin]),
                "canon_acc": _accuracy([(r["canon_label"], r["label"]) for r in in_bin]),
            }
        )

    total_cost = CostCounter()
    for r in results:
        total_cost.add(r["cost"])
    baseline_acc = _accuracy([(r["baseline_label"], r["label"]) for r in results])
    canon_acc = _accuracy([(r["canon_label"], r["label"]) for r in results])
    budgets = {r["budget"] for r in results}
    return SweepReport(
        bins=bins,
        baseline_accuracy=baseline_acc,
        canon_accuracy=canon_acc,
        mean_gain=canon_acc - baseline_acc,
        budget_per_image=budgets.pop() if len(budgets) == 1 else (0 if not budgets else -1),
        mean_param_residual=(
            float(np.mean([r["param_residual"] for r in results])) if results else 0.0
        ),
        cost=total_cost,
        n_images=len(results),
        skipped=skipped,
        prompts=prompts,
        corruption_range=[],
        per_image=[{k: v for k, v in r.items() if k != "cost"} for r in results],
    )


def bench_color(
    images: Sequence[LabeledImage],
    spec: EnergySpec,
    schedule: NoiseSchedule | None,
    backend: EnergyBackend,
    opt: BoConfig,
    domain: TransformDomain | None = None,
    corruption_range=((-1.0, 1.0), (-1.0, 1.0)),
    prompts: Sequence[str] | None = None,
    seed: int = 0,
    n_bins: int = 4,
    workers: int = 1,
) -> SweepReport:
    """Seeded random illuminant per image; search the log-chroma box for the
    inverse; accuracy binned by corruption magnitude."""
    if domain is None:
        domain = TransformDomain.box(ColorLogChroma(), (-1.0, -1.0), (1.0, 1.0))
    (u_lo, u_hi), (v_lo, v_hi) = corruption_range
    mag_lo = math.hypot(
        0.0 if u_lo <= 0.0 <= u_hi else min(abs(u_lo), abs(u_hi)),
        0.0 if v_lo <= 0.0 <= v_hi else min(abs(v_lo), abs(v_hi)),
    )
    mag_hi = math.hypot(max(abs(u_lo), abs(u_hi)), max(abs(v_lo), abs(v_hi)))
    report = _sweep(
        images,
        spec,
        schedule,
        backend,
        opt,
        domain,
        corrupt_fn=lambda img, c: apply_color(img, c[0], c[1]),
        sample_corruption=lambda rng: np.array(
            [rng.uniform(u_lo, u_hi), rng.uniform(v_lo, v_hi)]
        ),
        magnitude_bounds=(mag_lo, mag_hi),
        prompts=prompts if prompts is not None else spec.prompts,
        seed=seed,
        n_bins=n_bins,
        workers=workers,
        tag="color",
    )
    report.corruption_range = [list(r) for r in corruption_range]
    return report


def bench_contrast(
    images: Sequence[LabeledImage],
    spec: EnergySpec,
    schedule: NoiseSchedule | None,
    backend: EnergyBackend,
    opt: BoConfig,
    domain: TransformDomain | None = None,
    corruption_range=(-0.6, 0.6),
    prompts: Sequence[str] | None = None,
    seed: int = 0,
    n_bins: int = 4,
    workers: int = 1,
) -> SweepReport:
    """Seeded random log-gamma per image; 1D search for the inverse."""
    if domain is None:
        domain = TransformDomain.box(GammaLog(), (-0.7,), (0.7,))
    g_lo, g_hi = corruption_range
    mag_lo = 0.0 if g_lo <= 0.0 <= g_hi else min(abs(g_lo), abs(g_hi))
    mag_hi = max(abs(g_lo), abs(g_hi))
    report = _sweep(
        images,
        spec,
        schedule,
        backend,
        opt,
        domain,
        corrupt_fn=lambda img, c: apply_gamma(img, float(c[0])),
        sample_corruption=lambda rng: np.array([rng.uniform(g_lo, g_hi)]),
        magnitude_bounds=(mag_lo, mag_hi),
        prompts=prompts if prompts is not None else spec.prompts,
        seed=seed,
        n_bins=n_bins,
        workers=workers,
        tag="gamma",
    )
    report.corruption_range = [float(g_lo), float(g_hi)]
    return report


# ---------------------------------------------------------------------------
# Optimizer-vs-oracle studies

# Default budgets and success tolerances per named function.
BO_STUDY_DEFAULTS: dict[str, dict] = {
    "bowl1": {"bo": {"grid_per_dim": (3,), "n_random": 4, "n_iters": 5}, "tolerance": 1e-2},
    "bowl2": {"bo": {"grid_per_dim": (3, 3), "n_random": 6, "n_iters": 20}, "tolerance": 1e-2},
    "bowl6": {"bo": {"grid_per_dim": (), "n_random": 450, "n_iters": 150}, "tolerance": 0.05},
    "two-basin": {"bo": {"grid_per_dim": (5,), "n_random": 5, "n_iters": 10}, "tolerance": None},
}
_ORACLE_GRID_PER_DIM = {1: 1000, 2: 200}
_RANDOM_ORACLE_SAMPLES = 10**6


def oracle_minimum(func: SyntheticFunction) -> float:
    """Exhaustive-oracle minimum: dense grid up to 2D, random search beyond."""
    per_dim = _ORACLE_GRID_PER_DIM.get(func.dim)
    if per_dim is not None:
        return grid_oracle_min(func, per_dim)
    return random_oracle_min(func, _RANDOM_ORACLE_SAMPLES)


def bo_study(
    func: SyntheticFunction,
    trials: int = 100,
    tolerance: float | None = None,
    bo_overrides: dict | None = None,
    seed0: int = 0,
) -> dict:
    """Run bo_minimize over `trials` seeds and compare against the oracle.

    Success means best_value <= oracle + tolerance; for two-basin (no
    tolerance) it means landing in the deeper basin.
    """
    defaults = BO_STUDY_DEFAULTS.get(func.name, {"bo": {}, "tolerance": 1e-2})
    bo_kwargs = dict(defaults["bo"])
    if bo_overrides:
        bo_kwargs.update(bo_overrides)
    tol = tolerance if tolerance is not None else defaults["tolerance"]
    oracle = oracle_minimum(func)
    domain = func.domain()

    successes = 0
    bests = []
    budget = None
    for trial in range(trials):
        config = BoConfig(seed=seed0 + trial, **bo_kwargs)
        trace = bo_minimize(domain, lambda p: func(p.as_array()), config)
        budget = len(trace)
        best_val = trace.best_energy
        bests.append(best_val)
        if tol is not None:
            ok = best_val <= oracle + tol
        else:
            best_x = np.asarray(trace.best_point.params)
            ok = bool(np.linalg.norm(best_x - np.asarray(func.minimizer)) <= 0.1)
        successes += 1 if ok else 0
    return {
        "function": func.name,
        "dim": func.dim,
        "oracle_min": oracle,
        "analytic_min": func.min_value,
        "trials": trials,
        "successes": successes,
        "success_rate": successes / trials if trials else 0.0,
        "tolerance": tol,
        "mean_best": float(np.mean(bests)) if bests else 0.0,
        "budget": budget,
        "bo": {k: list(v) if isinstance(v, tuple) else v for k, v in bo_kwargs.items()},
        "seed0": seed0,
    }


def bench_bo_synthetic(
    function_names: Sequence[str],
    trials: int = 100,
    tolerance: float | None = None,
    seed0: int = 0,
) -> dict:
    functions = [get_synthetic_function(name) for name in function_names]
    studies = [bo_study(f, trials=trials, tolerance=tolerance, seed0=seed0) for f in functions]
    return {"functions": {s["function"]: s for s in studies}}


# ---------------------------------------------------------------------------
# Energy / gate evaluation


def energy_eval(
    images: Sequence[LabeledImage],
    spec: EnergySpec,
    schedule: NoiseSchedule | None,
    backend: EnergyBackend,
    workers: int = 1,
) -> dict:
    """Per-image energy components under the given spec."""

    def job(entry: LabeledImage) -> dict:
        row: dict = {"id": entry.id, "label": entry.label}
        if spec.gamma1 != 0.0:
            row["classifier_energy"] = classifier_component(entry.image, spec, backend)
        if spec.gamma2 != 0.0:
            row["diffusion_energy"] = diffusion_energy(entry.image, spec, schedule, backend)
        row["combined_energy"] = spec.gamma1 * row.get("classifier_energy", 0.0) + spec.gamma2 * row.get(
            "diffusion_energy", 0.0
        )
        return row

    results, skipped = _map_images(images, job, workers)
    summary = {}
    for key in ("classifier_energy", "diffusion_energy", "combined_energy"):
        vals = [r[key] for r in results if key in r]
        if vals:
            summary[f"mean_{key}"] = float(np.mean(vals))
    return {
        "n_images": len(results),
        "skipped": skipped,
        **summary,
        "per_image": results,
    }


def gate_eval(
    images: Sequence[LabeledImage],
    spec: EnergySpec,
    schedule: NoiseSchedule | None,
    backend: EnergyBackend,
    threshold: float = 0.0,
    workers: int = 1,
) -> dict:
    """Gate quality on an upright dataset: accept originals, reject their
    90-degree rotations."""

    def job(entry: LabeledImage) -> dict:
        keep = gate_upright(entry.image, spec, schedule, backend, threshold)
        rot = gate_upright(rotate(entry.image, 90.0), spec, schedule, backend, threshold)
        return {"id": entry.id, "upright_pass": bool(keep), "rotated_pass": bool(rot)}

    results, skipped = _map_images(images, job, workers)
    n = len(results)
    upright_rate = sum(r["upright_pass"] for r in results) / n if n else 0.0
    reject_rate = sum(not r["rotated_pass"] for r in results) / n if n else 0.0
    return {
        "threshold": threshold,
        "n_images": n,
        "skipped": skipped,
        "upright_pass_rate": upright_rate,
        "rotated_reject_rate": reject_rate,
        "accuracy": (upright_rate + reject_rate) / 2.0,
        "per_image": results,
    }
