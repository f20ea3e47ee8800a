#!/usr/bin/env python3
"""Sweep the guidance strength constant and record the achieved costs.

Uses the tree-phase models of a finished campaign directory and writes
sweeps/strength_sweep.csv inside it (consumed by `arithopt export-plots`).

Example:
    python scripts/sweep_strength.py --campaign runs/desk8 --strengths 0 1 10 100 1000
"""
import argparse
from pathlib import Path

from arithopt.campaign import config_from_text
from arithopt.neural import load_checkpoint, make_schedule
from arithopt.sampling import GuidanceConfig
from arithopt.sweeps import STRENGTH_SWEEP_HEADER, strength_sweep, write_sweep_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--campaign", required=True)
    ap.add_argument("--strengths", type=float, nargs="+", required=True)
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--steps", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    root = Path(args.campaign)
    cfg = config_from_text((root / "config.txt").read_text())
    denoiser, _ = load_checkpoint(root / "phase_ct" / "denoiser.pt")
    predictor, _ = load_checkpoint(root / "phase_ct" / "predictor.pt")
    schedule = make_schedule(cfg.timesteps, cfg.schedule)
    base = GuidanceConfig(target_y=cfg.target_y, reflect_steps=args.k, steps=args.steps)
    rows = strength_sweep(
        denoiser,
        predictor,
        schedule,
        args.strengths,
        args.samples,
        base,
        kind="ct",
        n=cfg.n,
        extra_stages=cfg.extra_stages,
        seed=args.seed,
    )
    out = root / "sweeps"
    out.mkdir(exist_ok=True)
    write_sweep_csv(rows, out / "strength_sweep.csv", STRENGTH_SWEEP_HEADER)
    print(f"wrote {len(rows)} rows to {out / 'strength_sweep.csv'}")


if __name__ == "__main__":
    main()
