"""Run configuration: TOML parsing, validation, and resolution to engine objects.

Sections: [task], [dataset], [transform], [energy], [optimizer], [backend].
Top-level keys out/workers/seed/crop_disk hold run plumbing; the CLI flags
--out/--workers/--seed/--crop-disk override them.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ..energy import NoiseSchedule, make_linear_schedule
from ..errors import ArgumentError, ConfigError
from ..optimize import BoConfig
from ..transforms import (
    ColorLogChroma,
    GammaLog,
    RotationDeg,
    TransformDomain,
    TransformKind,
    enumerate_cn,
)

TASKS = (
    "canon",
    "bench-rotation",
    "bench-color",
    "bench-contrast",
    "bench-bo-synthetic",
    "energy-eval",
    "gate-eval",
)

# Search-budget defaults per transform family (grid, random, iters).
DEFAULT_BUDGETS = {
    "color": {"grid_per_dim": (3, 3), "n_random": 6, "n_iters": 20},
    "gamma": {"grid_per_dim": (3,), "n_random": 4, "n_iters": 5},
}

# Named corruption presets for the color sweep.
COLOR_PRESETS = {
    "full": ((-1.0, 1.0), (-1.0, 1.0)),
    "rcc": ((-0.7, -0.3), (-0.7, -0.3)),
}


@dataclass
class RunConfig:
    task: str
    config_dir: Path
    raw: dict
    out_dir: Path
    workers: int
    seed: int
    crop_disk: bool
    task_params: dict
    dataset: dict
    transform: dict
    energy: dict
    optimizer: dict
    backend: dict

    def digest_payload(self) -> dict:
        payload = dict(self.raw)
        payload["task"] = self.task
        payload["workers"] = self.workers
        payload["seed"] = self.seed
        payload["crop_disk"] = self.crop_disk
        payload.pop("out", None)  # output location doesn't change results
        return payload


def _expect_table(raw: dict, name: str) -> dict:
    block = raw.get(name, {})
    if not isinstance(block, dict):
        raise ConfigError(f"[{name}] must be a table, got {type(block).__name__}")
    return dict(block)


def _expect_type(block: dict, section: str, key: str, types, default):
    value = block.get(key, default)
    if value is not None and not isinstance(value, types):
        raise ConfigError(f"[{section}] {key} has wrong type {type(value).__name__}")
    return value


def load_config(
    path,
    task: str | None = None,
    out: str | None = None,
    workers: int | None = None,
    seed: int | None = None,
    crop_disk: bool | None = None,
) -> RunConfig:
    """Parse and validate a run config; CLI overrides win over file values."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from exc

    task_block = _expect_table(raw, "task")
    cfg_task = task or task_block.get("name")
    if cfg_task is None:
        raise ConfigError("no task given: pass one on the CLI or set [task] name")
    if cfg_task not in TASKS:
        raise ConfigError(f"unknown task {cfg_task!r}; expected one of {', '.join(TASKS)}")
    if task is not None and "name" in task_block and task_block["name"] != task:
        raise ConfigError(
            f"CLI task {task!r} conflicts with [task] name = {task_block['name']!r}"
        )
    task_block.pop("name", None)

    out_dir = Path(out if out is not None else raw.get("out", "runs/out"))
    if not out_dir.is_absolute():
        base = Path.cwd() if out is not None else path.parent
        out_dir = base / out_dir

    workers_val = workers if workers is not None else raw.get("workers", 1)
    if not isinstance(workers_val, int) or workers_val < 1:
        raise ConfigError(f"workers must be a positive integer, got {workers_val!r}")
    seed_val = seed if seed is not None else raw.get("seed", 0)
    if not isinstance(seed_val, int):
        raise ConfigError(f"seed must be an integer, got {seed_val!r}")
    crop_val = crop_disk if crop_disk is not None else raw.get("crop_disk", False)
    if not isinstance(crop_val, bool):
        raise ConfigError(f"crop_disk must be a boolean, got {crop_val!r}")

    dataset = _expect_table(raw, "dataset")
    if "manifest" in dataset:
        manifest = Path(dataset["manifest"])
        if not manifest.is_absolute():
            manifest = path.parent / manifest
        if not manifest.is_file():
            raise ConfigError(f"dataset manifest not found: {manifest}")
        dataset["manifest"] = manifest
    limit = _expect_type(dataset, "dataset", "limit", int, None)
    if limit is not None and limit < 0:
        raise ConfigError(f"[dataset] limit must be >= 0, got {limit}")

    energy = _expect_table(raw, "energy")
    if "prompts_file" in energy:
        pf = Path(energy["prompts_file"])
        if not pf.is_absolute():
            pf = path.parent / pf
        if not pf.is_file():
            raise ConfigError(f"prompts file not found: {pf}")
        energy["prompts_file"] = pf

    backend = _expect_table(raw, "backend")
    backend.setdefault("kind", "synthetic")
    if backend["kind"] not in ("synthetic", "local", "remote"):
        raise ConfigError(f"[backend] kind must be synthetic|local|remote, got {backend['kind']!r}")
    if backend["kind"] == "local":
        if "weights" not in backend:
            raise ConfigError("[backend] kind = 'local' needs a weights path")
        wp = Path(backend["weights"])
        if not wp.is_absolute():
            wp = path.parent / wp
        if not wp.is_file():
            raise ConfigError(f"weights archive not found: {wp}")
        backend["weights"] = wp
    if backend["kind"] == "remote" and "url" not in backend:
        raise ConfigError("[backend] kind = 'remote' needs a url")

    return RunConfig(
        task=cfg_task,
        config_dir=path.parent,
        raw=raw,
        out_dir=out_dir,
        workers=workers_val,
        seed=seed_val,
        crop_disk=crop_val,
        task_params=task_block,
        dataset=dataset,
        transform=_expect_table(raw, "transform"),
        energy=energy,
        optimizer=_expect_table(raw, "optimizer"),
        backend=backend,
    )


def build_schedule(cfg: RunConfig) -> NoiseSchedule:
    e = cfg.energy
    try:
        return make_linear_schedule(
            T=e.get("schedule_T", 1000),
            beta_start=e.get("schedule_beta_start", 0.00085),
            beta_end=e.get("schedule_beta_end", 0.012),
        )
    except ArgumentError as exc:
        raise ConfigError(f"[energy] schedule: {exc}") from exc


def build_transform(cfg: RunConfig, default_kind: str | None = None) -> tuple[TransformKind, TransformDomain]:
    """Resolve [transform] into a kind plus search domain."""
    block = cfg.transform
    kind_name = block.get("kind", default_kind)
    if kind_name is None:
        raise ConfigError("[transform] kind is required for this task")
    try:
        if kind_name == "rotation":
            fill = tuple(block.get("fill", (0.0, 0.0, 0.0)))
            if "n" in block:
                domain = enumerate_cn(int(block["n"]), fill=fill)
                return domain.decoder, domain
            kind = RotationDeg(fill=fill)
            lower = block.get("lower", [0.0])
            upper = block.get("upper", [360.0])
            return kind, TransformDomain.box(kind, lower, upper)
        if kind_name == "color":
            kind = ColorLogChroma()
            lower = block.get("lower", [-1.0, -1.0])
            upper = block.get("upper", [1.0, 1.0])
            return kind, TransformDomain.box(kind, lower, upper)
        if kind_name == "gamma":
            kind = GammaLog()
            lower = block.get("lower", [-0.7])
            upper = block.get("upper", [0.7])
            return kind, TransformDomain.box(kind, lower, upper)
    except ArgumentError as exc:
        raise ConfigError(f"[transform] {exc}") from exc
    raise ConfigError(f"[transform] unknown kind {kind_name!r}; expected rotation|color|gamma")


def build_bo_config(cfg: RunConfig, family: str | None = None) -> BoConfig:
    """[optimizer] with per-family budget defaults filled in."""
    block = dict(cfg.optimizer)
    defaults = dict(DEFAULT_BUDGETS.get(family, {}))
    defaults.setdefault("seed", cfg.seed)
    for key, value in defaults.items():
        block.setdefault(key, value)
    known = {f.name for f in dataclasses.fields(BoConfig)}
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"[optimizer] unknown keys: {', '.join(sorted(unknown))}")
    if "grid_per_dim" in block:
        block["grid_per_dim"] = tuple(block["grid_per_dim"])
    try:
        return BoConfig(**block)
    except (ArgumentError, TypeError) as exc:
        raise ConfigError(f"[optimizer] {exc}") from exc


def resolve_prompts(cfg: RunConfig, labels: list[int]) -> tuple[str, ...]:
    """Explicit prompts win; otherwise a prompts file; otherwise the template
    expanded over the label range."""
    e = cfg.energy
    if "prompts" in e:
        prompts = tuple(str(p) for p in e["prompts"])
    elif "prompts_file" in e:
        lines = Path(e["prompts_file"]).read_text(encoding="utf-8").splitlines()
        prompts = tuple(line.strip() for line in lines if line.strip())
    else:
        template = e.get("prompt_template", "a photo of a {label}")
        names = cfg.dataset.get("classes")
        if names is None:
            n = max(labels, default=-1) + 1
            names = [str(i) for i in range(n)]
        try:
            prompts = tuple(template.format(label=name) for name in names)
        except (KeyError, IndexError) as exc:
            raise ConfigError(f"[energy] bad prompt_template {template!r}: {exc}") from exc
    if not prompts and e.get("gamma1", 1.0) != 0.0:
        raise ConfigError("classifier term enabled but no prompts could be resolved")
    return prompts


def build_energy_spec(cfg: RunConfig, prompts: tuple[str, ...]):
    from ..energy import EnergySpec

    e = cfg.energy
    kwargs = {}
    for key in ("alpha", "beta", "gamma1", "gamma2", "temperature", "mc_samples", "noise_seed"):
        if key in e:
            kwargs[key] = e[key]
    if "timesteps" in e:
        kwargs["timesteps"] = tuple(int(t) for t in e["timesteps"])
    if "normalizing_prompt" in e:
        kwargs["normalizing_prompt"] = str(e["normalizing_prompt"])
    try:
        return EnergySpec(prompts=prompts, **kwargs)
    except ArgumentError as exc:
        raise ConfigError(f"[energy] {exc}") from exc
