"""Command-line entry point for the whole pipeline.

Subcommands: gen-dataset, train, sample, legalize, verify, evaluate,
optimize, pareto, export-plots. Every run writes a manifest (tool version,
config hash, RNG seed) next to its outputs; diagnostics go to stderr, data to
files or stdout. Exit codes: 0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .campaign import (
    ARCHIVE_HEADER,
    CampaignConfig,
    CampaignError,
    ParetoArchive,
    ParetoPoint,
    TOOL_VERSION,
    config_from_text,
    config_to_text,
    run_campaign,
)
from .codec import design_to_json, load_design, save_design
from .ct import CompressorTree
from .dataset import DatasetSpec, generate_dataset, save_dataset, load_dataset
from .legalize import LegalizationError, legalize_ct, legalize_prefix
from .netlist import assemble_multiplier, emit_hdl, verify_exhaustive
from .neural import (
    TrainConfig,
    encode_designs,
    load_checkpoint,
    make_denoiser,
    make_predictor,
    make_schedule,
    save_checkpoint,
    train_diffusion,
    train_predictor,
)
from .prefix import PrefixBitmap
from .qor import evaluate_design
from .sampling import GuidanceConfig, sample_guided, sample_unconditional
from .sweeps import STRENGTH_SWEEP_HEADER, TARGET_SWEEP_HEADER

ROUNDS_HEADER = ("phase", "round", "best_of_round", "best_so_far")


class DomainError(RuntimeError):
    """Anything that should exit with status 1 rather than a traceback."""


def write_manifest(out_dir: Path, seed: int | None, config_text: str = "") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "tool": "arithopt",
        "version": TOOL_VERSION,
        "config_hash": hashlib.sha256(config_text.encode()).hexdigest()[:16],
        "seed": seed,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _cmd_gen_dataset(args) -> int:
    if args.preset == "paper":
        spec = DatasetSpec.paper_scale(args.kind, args.n, rng_seed=args.seed)
    else:
        spec = DatasetSpec.desk_scale(args.kind, args.n, rng_seed=args.seed)
    if args.count:
        spec = DatasetSpec(
            kind=args.kind,
            n=args.n,
            unlabeled_count=args.count,
            labeled_count=args.labeled or max(1, args.count // 10),
            rng_seed=args.seed,
            extra_stages=args.extra_stages,
        )
    ds = generate_dataset(spec)
    out = Path(args.out)
    save_dataset(ds, out)
    write_manifest(out, args.seed, config_text=str(spec))
    print(f"wrote {len(ds.designs)} designs, {len(ds.labeled)} labels to {out}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    schedule = make_schedule(args.timesteps, args.schedule)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    meta = {
        "kind": ds.spec.kind,
        "n": ds.spec.n,
        "timesteps": args.timesteps,
        "schedule": args.schedule,
    }
    if args.model == "diffusion":
        net = make_denoiser(ds.spec.kind, ds.spec.n, seed=args.seed)
        result = train_diffusion(net, encode_designs(ds.designs), schedule, cfg)
    else:
        net = make_predictor(ds.spec.kind, ds.spec.n, seed=args.seed)
        designs = [ds.designs[i] for i, _ in ds.labeled]
        ys = np.asarray([label.y for _, label in ds.labeled], dtype=np.float32)
        result = train_predictor(net, encode_designs(designs), ys, cfg)
        meta["val_mse"] = result.val_mse
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, net, meta)
    curve = out.with_suffix(".losses.csv")
    with open(curve, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "loss"))
        for e, loss in enumerate(result.losses):
            writer.writerow((e, f"{loss:.8g}"))
    write_manifest(out.parent, args.seed, config_text=str(cfg))
    print(f"final loss {result.losses[-1]:.6f}" +
          (f", val mse {result.val_mse:.6f}" if result.val_mse is not None else ""),
          file=sys.stderr)
    return 0


def _cmd_sample(args) -> int:
    denoiser, meta = load_checkpoint(args.denoiser)
    kind, n = meta["kind"], meta["n"]
    schedule = make_schedule(meta.get("timesteps", 1000), meta.get("schedule", "linear-abar"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.unconditional or args.predictor is None:
        batch = sample_unconditional(
            args.count, denoiser, schedule, steps=args.steps, kind=kind, n=n,
            extra_stages=args.extra_stages, seed=args.seed,
        )
    else:
        predictor, _ = load_checkpoint(args.predictor)
        cfg = GuidanceConfig(
            target_y=args.target, strength=args.strength,
            reflect_steps=args.k, steps=args.steps,
        )
        batch = sample_guided(
            args.count, cfg, denoiser, predictor, schedule,
            kind=kind, n=n, extra_stages=args.extra_stages, seed=args.seed,
        )
    for i, design in enumerate(batch.designs):
        if design is not None:
            save_design(design, out / f"sample_{i:04d}.json")
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("sample", "finite", "predicted_y", "drv_count"))
        writer.writeheader()
        for diag in batch.diagnostics:
            writer.writerow(diag.to_row())
    write_manifest(out, args.seed)
    ok = sum(1 for d in batch.designs if d is not None)
    print(f"sampled {ok}/{args.count} finite designs into {out}", file=sys.stderr)
    return 0


def _cmd_legalize(args) -> int:
    design = load_design(args.design)
    if isinstance(design, CompressorTree):
        try:
            legal, report = legalize_ct(design, max_steps=args.max_steps)
        except LegalizationError as err:
            print(json.dumps(err.report.to_json()), file=sys.stdout)
            raise DomainError(str(err))
        doc = report.to_json()
    else:
        legal = legalize_prefix(design, force_outputs=True)
        doc = {"steps_taken": 0, "detours": 0, "final_violations": 0, "trace": []}
    if args.out:
        save_design(legal, args.out)
    else:
        print(json.dumps(design_to_json(legal)))
    print(json.dumps(doc))
    return 0


def _load_pair(args) -> tuple[CompressorTree, PrefixBitmap | None, int]:
    design = load_design(args.design)
    cpa = load_design(args.cpa) if getattr(args, "cpa", None) else None
    ct = load_design(args.ct) if getattr(args, "ct", None) else None
    if isinstance(design, CompressorTree):
        if cpa is not None and not isinstance(cpa, PrefixBitmap):
            raise DomainError("--cpa must point at a prefix design")
        return design, cpa, design.n
    if not isinstance(design, PrefixBitmap):
        raise DomainError("unsupported design document")
    if design.n % 2:
        raise DomainError("a multiplier adder needs an even width")
    n = design.n // 2
    if ct is None:
        from .ct import wallace_tree

        ct = wallace_tree(n)
    if not isinstance(ct, CompressorTree):
        raise DomainError("--ct must point at a compressor-tree design")
    return ct, design, n


def _cmd_verify(args) -> int:
    if args.hdl_in:
        if not args.n:
            raise DomainError("--hdl-in needs --n to size the case space")
        from .netlist import parse_hdl

        nl = parse_hdl(Path(args.hdl_in).read_text())
        n = args.n
    else:
        if not args.design:
            raise DomainError("pass --design or --hdl-in")
        tree, cpa, n = _load_pair(args)
        try:
            nl = assemble_multiplier(tree, cpa)
        except Exception as err:  # illegal design is a domain failure, not a crash
            raise DomainError(f"cannot assemble: {err}")
    if args.hdl:
        Path(args.hdl).write_text(emit_hdl(nl))
    result = verify_exhaustive(nl, n, jobs=args.jobs)
    print(json.dumps(result.to_json()))
    if not result.ok:
        raise DomainError("verification failed")
    return 0


def _cmd_evaluate(args) -> int:
    design = load_design(args.design)
    cpa = load_design(args.cpa) if args.cpa else None
    ct = load_design(args.ct) if args.ct else None
    label = evaluate_design(design, ct=ct, cpa=cpa, w=args.w)
    text = json.dumps(label.to_json())
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_optimize(args) -> int:
    overrides = {
        "n": args.n,
        "rounds": args.rounds,
        "seed": args.seed,
        "jobs": args.jobs,
    }
    if args.config:
        cfg = config_from_text(Path(args.config).read_text(), overrides)
    elif args.desk:
        cfg = CampaignConfig.desk_scale(**{k: v for k, v in overrides.items() if v is not None})
    else:
        cfg = config_from_text("", overrides)
    try:
        report = run_campaign(cfg, args.out, resume=args.resume)
    except CampaignError as err:
        raise DomainError(str(err))
    best = report.get("best")
    if best:
        print(f"best y = {best['y']:.6f} ({best['design_id']})", file=sys.stderr)
    return 0


def _cmd_pareto(args) -> int:
    archive = ParetoArchive()
    with open(args.labels, newline="") as fh:
        for row in csv.DictReader(fh):
            archive.update(
                ParetoPoint(
                    row["design_id"],
                    float(row["delay1"]),
                    float(row["area1"]),
                    float(row["y"]),
                )
            )
    Path(args.out).write_text(archive.to_csv_text())
    print(f"{len(archive.points)} non-dominated points", file=sys.stderr)
    return 0


def _copy_or_headers(src: Path, dst: Path, header) -> None:
    if src.exists():
        dst.write_text(src.read_text())
    else:
        dst.write_text(",".join(header) + "\n")


def export_plots(campaign_dir: str | Path, out_dir: str | Path) -> None:
    """Bundle campaign artifacts into tidy CSVs for any plotting tool."""
    src = Path(campaign_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _copy_or_headers(src / "archive.csv", out / "pareto.csv", ARCHIVE_HEADER)
    rows = []
    report_file = src / "report.json"
    if report_file.exists():
        report = json.loads(report_file.read_text())
        for phase, rep in report.get("phases", {}).items():
            for entry in rep.get("rounds", []):
                rows.append(
                    (
                        phase,
                        entry["round"],
                        "" if entry["best_of_round"] is None else f"{entry['best_of_round']:.10g}",
                        "" if entry["best_so_far"] is None else f"{entry['best_so_far']:.10g}",
                    )
                )
    with open(out / "rounds.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROUNDS_HEADER)
        writer.writerows(rows)
    _copy_or_headers(src / "sweeps" / "target_sweep.csv", out / "target_sweep.csv", TARGET_SWEEP_HEADER)
    _copy_or_headers(src / "sweeps" / "strength_sweep.csv", out / "strength_sweep.csv", STRENGTH_SWEEP_HEADER)


def _cmd_export_plots(args) -> int:
    export_plots(args.campaign, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arithopt",
        description="Diffusion-guided multiplier design-space exploration",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="generate a design corpus with labels")
    p.add_argument("--kind", choices=("ct", "prefix"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=0, help="unlabeled designs (0 = preset)")
    p.add_argument("--labeled", type=int, default=0)
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--extra-stages", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_gen_dataset)

    p = sub.add_parser("train", help="train the denoiser or the cost predictor")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=("diffusion", "predictor"), required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--timesteps", type=int, default=1000)
    p.add_argument("--schedule", choices=("linear-abar", "cosine"), default="linear-abar")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("sample", help="draw designs from a trained model")
    p.add_argument("--denoiser", required=True)
    p.add_argument("--predictor")
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--target", type=float, default=0.7)
    p.add_argument("--strength", type=float, default=10.0)
    p.add_argument("--k", type=int, default=25, help="self-reflection repeats per step")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--unconditional", action="store_true")
    p.add_argument("--extra-stages", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("legalize", help="repair a design's rule violations")
    p.add_argument("--design", required=True)
    p.add_argument("--out")
    p.add_argument("--max-steps", type=int, default=5000)
    p.set_defaults(fn=_cmd_legalize)

    p = sub.add_parser("verify", help="exhaustively verify an assembled multiplier")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--design", help="compressor tree or prefix design JSON")
    source.add_argument("--hdl-in", help="verify an existing structural HDL file instead")
    p.add_argument("--cpa", help="prefix design JSON for the adder")
    p.add_argument("--ct", help="compressor tree JSON when --design is an adder")
    p.add_argument("--hdl", help="also emit structural HDL to this path")
    p.add_argument("--n", type=int, help="operand width for --hdl-in")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("evaluate", help="score a design with the analytical cost model")
    p.add_argument("--design", required=True)
    p.add_argument("--cpa")
    p.add_argument("--ct")
    p.add_argument("--w", type=float, default=0.66)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("optimize", help="run the multi-round optimization campaign")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--desk", action="store_true", help="desk-scale defaults")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--n", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_optimize)

    p = sub.add_parser("pareto", help="non-dominated filter over a label CSV")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_pareto)

    p = sub.add_parser("export-plots", help="bundle campaign CSVs for plotting")
    p.add_argument("--campaign", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_export_plots)

    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (LegalizationError, CampaignError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
