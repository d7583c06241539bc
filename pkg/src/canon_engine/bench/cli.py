"""`canon-engine` command line: load a TOML run config, execute the task,
write reports, map failures to exit codes (2 config/data, 3 backend, 1 other)."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..energy import EnergyBackend, NoiseSchedule
from ..errors import BackendError, ConfigError, DatasetError, EngineError
from ..imgcore import (
    LabeledImage,
    inscribed_square_crop,
    load_manifest_images,
    load_png,
    save_png,
)
from ..localmodel import LocalModelBackend
from ..pipeline import canonicalize, stable_digest
from ..synthetic import make_synthetic_backend
from ..errors import ArgumentError
from . import protocols
from .config import (
    COLOR_PRESETS,
    TASKS,
    RunConfig,
    build_bo_config,
    build_energy_spec,
    build_schedule,
    build_transform,
    load_config,
    resolve_prompts,
)
from .reports import envelope, write_report

log = logging.getLogger("canon_engine.bench")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="canon-engine",
        description="Canonicalize images by energy ranking and run the benchmark protocols.",
    )
    parser.add_argument("task", choices=TASKS, help="task to run")
    parser.add_argument("--config", required=True, help="path to the TOML run config")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--workers", type=int, default=None, help="worker pool size")
    parser.add_argument("--seed", type=int, default=None, help="global seed (overrides config)")
    parser.add_argument(
        "--crop-disk",
        action="store_const",
        const=True,
        default=None,
        help="score candidates on the inscribed-square crop (ignores rotation fill corners)",
    )
    return parser


def _load_dataset(cfg: RunConfig) -> list[LabeledImage]:
    if "manifest" not in cfg.dataset:
        raise ConfigError(f"task {cfg.task!r} needs [dataset] manifest")
    images = load_manifest_images(cfg.dataset["manifest"])
    include = cfg.dataset.get("include_ids")
    if include is not None:
        wanted = set(map(str, include))
        images = [img for img in images if img.id in wanted]
    limit = cfg.dataset.get("limit")
    if limit is not None:
        images = images[:limit]
    return images


def _build_backend(cfg: RunConfig, schedule: NoiseSchedule) -> EnergyBackend:
    block = cfg.backend
    kind = block["kind"]
    if kind == "synthetic":
        params = {k: v for k, v in block.items() if k not in ("kind", "name")}
        try:
            return make_synthetic_backend(block.get("name", "constant"), **params)
        except (ArgumentError, TypeError) as exc:
            raise ConfigError(f"[backend] {exc}") from exc
    if kind == "local":
        return LocalModelBackend(block["weights"], schedule)
    from ..bridge import RemoteBackend, RemoteBackendConfig

    rb = RemoteBackendConfig(
        base_url=str(block["url"]),
        timeout_ms=int(block.get("timeout_ms", 10000)),
        retries=int(block.get("retries", 0)),
        request_image_size=tuple(block.get("image_size", (224, 224))),
    )
    return RemoteBackend(rb)


def _seeds_block(cfg: RunConfig, spec=None, opt=None) -> dict:
    seeds = {"global": cfg.seed}
    if spec is not None:
        seeds["noise"] = spec.noise_seed
    if opt is not None:
        seeds["optimizer"] = opt.seed
    return seeds


def _run_task(cfg: RunConfig) -> dict[str, Path]:
    digest = stable_digest(cfg.digest_payload())
    score_view = inscribed_square_crop if cfg.crop_disk else None

    if cfg.task == "bench-bo-synthetic":
        names = cfg.task_params.get("functions", ["bowl2"])
        trials = int(cfg.task_params.get("trials", 100))
        tolerance = cfg.task_params.get("tolerance")
        body = protocols.bench_bo_synthetic(names, trials=trials, tolerance=tolerance, seed0=cfg.seed)
        report = {**envelope(cfg.task, digest, {"global": cfg.seed}), **body}
        rows = [
            {
                "function": s["function"],
                "oracle_min": s["oracle_min"],
                "mean_best": s["mean_best"],
                "success_rate": s["success_rate"],
                "trials": s["trials"],
                "budget": s["budget"],
            }
            for s in body["functions"].values()
        ]
        return write_report(report, cfg.out_dir, rows, list(rows[0]) if rows else None)

    schedule = build_schedule(cfg)
    backend = _build_backend(cfg, schedule)
    images = _load_dataset(cfg) if cfg.task != "canon" else []
    if cfg.task != "canon" and not images:
        log.warning("dataset selection is empty; writing a zero-count report")
    prompts = resolve_prompts(cfg, [img.label for img in images])
    spec = build_energy_spec(cfg, prompts)

    if cfg.backend["kind"] == "remote" and spec.gamma2 != 0.0:
        # keep client-side cumulative-signal math in lockstep with the server
        from ..bridge import RemoteBackend

        assert isinstance(backend, RemoteBackend)
        schedule = backend.schedule()

    if cfg.task == "canon":
        image_path = cfg.task_params.get("image")
        if image_path is None:
            raise ConfigError("[task] image is required for the canon task")
        image_path = Path(image_path)
        if not image_path.is_absolute():
            image_path = cfg.config_dir / image_path
        image = load_png(image_path)
        kind, domain = build_transform(cfg)
        family = cfg.transform.get("kind")
        opt = None if domain.is_discrete else build_bo_config(cfg, family)
        res = canonicalize(image, kind, domain, spec, schedule, backend, opt=opt, score_view=score_view)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        save_png(res.canonical, cfg.out_dir / "canonical.png")
        trace = {
            "best_point": list(res.best_point.params),
            "best_energy": res.trace.best_energy,
            "evaluations": [
                {"point": list(e.point.params), "energy": e.energy, "stage": e.stage}
                for e in res.trace.evaluations
            ],
            "cost": res.cost.as_dict(),
            "spec_digest": res.spec_digest,
        }
        (cfg.out_dir / "trace.json").write_text(
            json.dumps(trace, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        report = {
            **envelope(cfg.task, digest, _seeds_block(cfg, spec)),
            "input": str(image_path),
            **trace,
        }
        rows = [{"best_energy": res.trace.best_energy, "best_point": json.dumps(trace["best_point"])}]
        return write_report(report, cfg.out_dir, rows, list(rows[0]))

    if cfg.task == "bench-rotation":
        n = int(cfg.task_params.get("n", 8))
        fill = tuple(cfg.transform.get("fill", (0.0, 0.0, 0.0)))
        body = protocols.bench_rotation(
            images, n, spec, schedule, backend,
            prompts=prompts, fill=fill, workers=cfg.workers, score_view=score_view,
        )
        views = cfg.task_params.get("views")
        if views is not None:
            body.tta = protocols.bench_tta(
                images, n, int(views), backend, prompts, seed=cfg.seed, fill=fill, workers=cfg.workers
            )
        report = {**envelope(cfg.task, digest, _seeds_block(cfg, spec)), **body.as_dict()}
        rows = [
            {
                "angle": f"{angle:g}",
                "baseline_acc": body.per_angle[angle]["baseline_acc"],
                "canon_acc": body.per_angle[angle]["canon_acc"],
            }
            for angle in body.angles
        ]
        return write_report(
            report, cfg.out_dir, rows, ["angle", "baseline_acc", "canon_acc"], body.per_image
        )

    if cfg.task in ("bench-color", "bench-contrast"):
        family = "color" if cfg.task == "bench-color" else "gamma"
        opt = build_bo_config(cfg, family)
        cfg.transform.setdefault("kind", family)
        kind, domain = build_transform(cfg, default_kind=family)
        if domain.is_discrete:
            raise ConfigError(f"{cfg.task} needs a box domain")
        n_bins = int(cfg.task_params.get("bins", 4))
        if cfg.task == "bench-color":
            preset = cfg.task_params.get("preset")
            if preset is not None:
                if preset not in COLOR_PRESETS:
                    raise ConfigError(f"unknown color preset {preset!r}; known: {', '.join(COLOR_PRESETS)}")
                corruption_range = COLOR_PRESETS[preset]
            else:
                corruption_range = cfg.task_params.get("corruption_range", COLOR_PRESETS["full"])
            body = protocols.bench_color(
                images, spec, schedule, backend, opt,
                domain=domain, corruption_range=corruption_range,
                prompts=prompts, seed=cfg.seed, n_bins=n_bins, workers=cfg.workers,
            )
        else:
            corruption_range = cfg.task_params.get("corruption_range", (-0.6, 0.6))
            body = protocols.bench_contrast(
                images, spec, schedule, backend, opt,
                domain=domain, corruption_range=corruption_range,
                prompts=prompts, seed=cfg.seed, n_bins=n_bins, workers=cfg.workers,
            )
        report = {**envelope(cfg.task, digest, _seeds_block(cfg, spec, opt)), **body.as_dict()}
        rows = [
            {
                "bin_lo": b["lo"],
                "bin_hi": b["hi"],
                "n": b["n"],
                "baseline_acc": b["baseline_acc"],
                "canon_acc": b["canon_acc"],
            }
            for b in body.bins
        ]
        return write_report(
            report, cfg.out_dir, rows,
            ["bin_lo", "bin_hi", "n", "baseline_acc", "canon_acc"], body.per_image,
        )

    if cfg.task == "energy-eval":
        body = protocols.energy_eval(images, spec, schedule, backend, workers=cfg.workers)
        per_image = body.pop("per_image")
        report = {**envelope(cfg.task, digest, _seeds_block(cfg, spec)), **body}
        fields = sorted({k for row in per_image for k in row})
        return write_report(report, cfg.out_dir, per_image, fields, per_image)

    if cfg.task == "gate-eval":
        threshold = float(cfg.task_params.get("threshold", 0.0))
        body = protocols.gate_eval(images, spec, schedule, backend, threshold=threshold, workers=cfg.workers)
        per_image = body.pop("per_image")
        report = {**envelope(cfg.task, digest, _seeds_block(cfg, spec)), **body}
        rows = [
            {
                "threshold": threshold,
                "accuracy": body["accuracy"],
                "upright_pass_rate": body["upright_pass_rate"],
                "rotated_reject_rate": body["rotated_reject_rate"],
            }
        ]
        return write_report(report, cfg.out_dir, rows, list(rows[0]), per_image)

    raise ConfigError(f"task {cfg.task!r} is not implemented")


def _find_backend_error(exc: BaseException) -> BackendError | None:
    seen = set()
    node: BaseException | None = exc
    while node is not None and id(node) not in seen:
        if isinstance(node, BackendError):
            return node
        seen.add(id(node))
        node = node.__cause__ or node.__context__
    return None


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            task=args.task,
            out=args.out,
            workers=args.workers,
            seed=args.seed,
            crop_disk=args.crop_disk,
        )
        paths = _run_task(cfg)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        backend_exc = _find_backend_error(exc)
        if backend_exc is not None:
            print(f"backend error: {backend_exc}", file=sys.stderr)
            return 3
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def main() -> None:
    sys.exit(run())
