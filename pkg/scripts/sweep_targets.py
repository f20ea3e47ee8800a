#!/usr/bin/env python3
"""Sweep the target cost of guided sampling against the achieved cost.

Uses the tree-phase models of a finished campaign directory and writes
sweeps/target_sweep.csv inside it (consumed by `arithopt export-plots`).

Example:
    python scripts/sweep_targets.py --campaign runs/desk8 --targets 0.9 0.95 1.0 1.05 1.1
"""
import argparse
import csv
from pathlib import Path

from arithopt.campaign import config_from_text
from arithopt.neural import load_checkpoint, make_schedule
from arithopt.sampling import GuidanceConfig
from arithopt.sweeps import TARGET_SWEEP_HEADER, target_sweep, write_sweep_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--campaign", required=True)
    ap.add_argument("--targets", type=float, nargs="+", required=True)
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--steps", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    root = Path(args.campaign)
    cfg = config_from_text((root / "config.txt").read_text())
    denoiser, meta = load_checkpoint(root / "phase_ct" / "denoiser.pt")
    predictor, _ = load_checkpoint(root / "phase_ct" / "predictor.pt")
    schedule = make_schedule(cfg.timesteps, cfg.schedule)
    base = GuidanceConfig(strength=cfg.strength, reflect_steps=args.k, steps=args.steps)
    rows = target_sweep(
        denoiser,
        predictor,
        schedule,
        args.targets,
        args.samples,
        base,
        kind="ct",
        n=cfg.n,
        extra_stages=cfg.extra_stages,
        seed=args.seed,
    )
    out = root / "sweeps"
    out.mkdir(exist_ok=True)
    write_sweep_csv(rows, out / "target_sweep.csv", TARGET_SWEEP_HEADER)
    print(f"wrote {len(rows)} rows to {out / 'target_sweep.csv'}")


if __name__ == "__main__":
    main()
