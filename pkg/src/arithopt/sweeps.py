"""Reusable sweep drivers behind the target/strength ablation plots."""
from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path

from .ct import CompressorTree
from .legalize import LegalizationError, legalize_ct, legalize_prefix
from .neural import NoiseSchedule
from .qor import evaluate_design
from .sampling import GuidanceConfig, sample_guided

TARGET_SWEEP_HEADER = ("target_y", "sample", "y", "drv_count", "legal")
STRENGTH_SWEEP_HEADER = ("strength", "sample", "y", "drv_count", "legal")


def _evaluate_batch(batch, kind: str, evaluate, max_steps: int = 5000) -> list[dict]:
    rows = []
    for design, diag in zip(batch.designs, batch.diagnostics):
        row = {
            "sample": diag.index,
            "y": "",
            "drv_count": "" if diag.drv_count is None else diag.drv_count,
            "legal": 0,
        }
        if design is not None:
            try:
                if isinstance(design, CompressorTree):
                    legal, _ = legalize_ct(design, max_steps=max_steps)
                else:
                    legal = legalize_prefix(design, force_outputs=True)
                row["legal"] = 1
                row["y"] = f"{evaluate(legal).y:.10g}"
            except LegalizationError:
                pass
        rows.append(row)
    return rows


def target_sweep(
    denoiser,
    predictor,
    schedule: NoiseSchedule,
    targets,
    samples_per_target: int,
    base: GuidanceConfig,
    *,
    kind: str,
    n: int,
    extra_stages: int = 1,
    seed: int = 0,
    evaluate=None,
) -> list[dict]:
    """Sample at each target cost and score the legalized results.

    Returns tidy rows (one per (target, sample)) ready for CSV export.
    """
    if evaluate is None:
        evaluate = lambda d: evaluate_design(d, extra_stages=extra_stages)
    rows = []
    for k, target in enumerate(targets):
        cfg = replace(base, target_y=float(target))
        batch = sample_guided(
            samples_per_target,
            cfg,
            denoiser,
            predictor,
            schedule,
            kind=kind,
            n=n,
            extra_stages=extra_stages,
            seed=seed + 7919 * k,
        )
        for row in _evaluate_batch(batch, kind, evaluate):
            rows.append({"target_y": f"{float(target):.6g}", **row})
    return rows


def strength_sweep(
    denoiser,
    predictor,
    schedule: NoiseSchedule,
    strengths,
    samples_per_point: int,
    base: GuidanceConfig,
    *,
    kind: str,
    n: int,
    extra_stages: int = 1,
    seed: int = 0,
    evaluate=None,
) -> list[dict]:
    """Sample at each guidance strength and score the legalized results."""
    if evaluate is None:
        evaluate = lambda d: evaluate_design(d, extra_stages=extra_stages)
    rows = []
    for k, strength in enumerate(strengths):
        cfg = replace(base, strength=float(strength))
        batch = sample_guided(
            samples_per_point,
            cfg,
            denoiser,
            predictor,
            schedule,
            kind=kind,
            n=n,
            extra_stages=extra_stages,
            seed=seed + 104729 * k,
        )
        for row in _evaluate_batch(batch, kind, evaluate):
            rows.append({"strength": f"{float(strength):.6g}", **row})
    return rows


def write_sweep_csv(rows: list[dict], path: str | Path, header) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def median_y(rows: list[dict]) -> float | None:
    """Median real cost over the successful samples of one sweep arm."""
    ys = sorted(float(r["y"]) for r in rows if r["legal"] and r["y"] != "")
    if not ys:
        return None
    mid = len(ys) // 2
    return ys[mid] if len(ys) % 2 else 0.5 * (ys[mid - 1] + ys[mid])
