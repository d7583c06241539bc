"""Report emission: versioned report.json, flat summary.csv, per-image JSONL.

Everything except the created_at timestamp is a pure function of the run
config, so re-running an identical config rewrites byte-identical files.
"""
from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path

from ..errors import ImageIOError

SCHEMA_VERSION = 1


def write_report(
    report: dict,
    out_dir,
    csv_rows: list[dict] | None = None,
    csv_fields: list[str] | None = None,
    per_image: list[dict] | None = None,
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ImageIOError(f"cannot create output directory {out_dir}: {exc}") from exc

    paths: dict[str, Path] = {}
    report_path = out_dir / "report.json"
    try:
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"cannot write {report_path}: {exc}") from exc
    paths["report"] = report_path

    if csv_rows is not None:
        csv_path = out_dir / "summary.csv"
        fields = csv_fields or (list(csv_rows[0].keys()) if csv_rows else [])
        try:
            with csv_path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.DictWriter(fh, fieldnames=fields)
                writer.writeheader()
                writer.writerows(csv_rows)
        except OSError as exc:
            raise ImageIOError(f"cannot write {csv_path}: {exc}") from exc
        paths["csv"] = csv_path

    if per_image is not None:
        jsonl_path = out_dir / "per_image.jsonl"
        try:
            with jsonl_path.open("w", encoding="utf-8") as fh:
                for row in per_image:
                    fh.write(json.dumps(row, sort_keys=True) + "\n")
        except OSError as exc:
            raise ImageIOError(f"cannot write {jsonl_path}: {exc}") from exc
        paths["per_image"] = jsonl_path
    return paths


def envelope(task: str, config_digest: str, seeds: dict) -> dict:
    """Common report header; created_at is the single nondeterministic field."""
    return {
        "schema": SCHEMA_VERSION,
        "task": task,
        "config_digest": config_digest,
        "seeds": seeds,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
