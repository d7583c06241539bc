"""Benchmark harness: run configs, protocols, reports, and the CLI."""

from .config import RunConfig, load_config
from .protocols import (
    RotationReport,
    SweepReport,
    bench_bo_synthetic,
    bench_color,
    bench_contrast,
    bench_rotation,
    bench_tta,
    bo_study,
    energy_eval,
    gate_eval,
)
from .reports import write_report

__all__ = [
    "RunConfig",
    "load_config",
    "RotationReport",
    "SweepReport",
    "bench_rotation",
    "bench_color",
    "bench_contrast",
    "bench_tta",
    "bench_bo_synthetic",
    "bo_study",
    "energy_eval",
    "gate_eval",
    "write_report",
]
