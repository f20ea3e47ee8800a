#!/usr/bin/env python3
"""Run a desk-scale two-phase optimization campaign.

Example:
    python scripts/run_desk_campaign.py --n 8 --out runs/desk8 --seed 0
"""
import argparse
import json

from arithopt.campaign import CampaignConfig, run_campaign


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--rounds", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    ap.add_argument("--resume", action="store_true")
    ap.add_argument("--ct-only", action="store_true")
    args = ap.parse_args()
    phases = ("ct",) if args.ct_only else ("ct", "cpa")
    cfg = CampaignConfig.desk_scale(
        n=args.n, rounds=args.rounds, seed=args.seed, phases=phases
    )
    report = run_campaign(cfg, args.out, resume=args.resume)
    print(json.dumps(report["best"], indent=2))


if __name__ == "__main__":
    main()
