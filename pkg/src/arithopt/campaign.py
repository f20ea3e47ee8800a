"""Multi-round explore/evaluate/fine-tune optimization with a Pareto archive.

A campaign runs two phases: first the compressor tree is optimized against
the built-in serial adder, then the best tree is frozen and the 2n-bit prefix
adder is optimized for the integrated multiplier. Every round samples guided
designs, legalizes and verifies them, labels a subset with the analytical
cost model, merges everything into the training corpora, fine-tunes both
networks, and updates the archive. All per-round randomness derives
statelessly from the master seed, so campaigns replay bit-identically and
resume mid-way without drift.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .codec import design_from_json, design_key, design_to_json
from .ct import CompressorTree, validate_ct
from .dataset import Dataset, DatasetSpec, generate_dataset
from .legalize import LegalizationError, legalize_ct, legalize_prefix
from .netlist import assemble_multiplier, verify_exhaustive
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
from .prefix import PrefixBitmap, serial_prefix
from .qor import QoRLabel, evaluate_design
from .sampling import GuidanceConfig, sample_guided

TOOL_VERSION = "0.1.0"

ARCHIVE_HEADER = ("design_id", "delay", "area", "y")

PHASE_CT = "ct"
PHASE_CPA = "cpa"


class CampaignError(RuntimeError):
    pass


def derive_seed(master: int, *parts) -> int:
    """Stateless per-purpose RNG seed: hash of the master seed and a label path."""
    text = f"{master}:" + "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


@dataclass(frozen=True)
class ParetoPoint:
    design_id: str
    delay: float
    area: float
    y: float


class ParetoArchive:
    """Insertion-ordered set of mutually non-dominated (delay, area) points."""

    def __init__(self, points: list[ParetoPoint] | None = None):
        self.points: list[ParetoPoint] = []
        for p in points or []:
            self.update(p)

    def update(self, point: ParetoPoint) -> bool:
        """Insert iff no archived point weakly dominates it; evict what it dominates.

        Exact ties on both axes keep the incumbent. Returns True when inserted.
        """
        for q in self.points:
            if q.delay <= point.delay and q.area <= point.area:
                return False
        self.points = [
            q
            for q in self.points
            if not (point.delay <= q.delay and point.area <= q.area)
        ] + [point]
        return True

    def best(self) -> ParetoPoint | None:
        if not self.points:
            return None
        return min(self.points, key=lambda p: (p.y, p.design_id))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(ARCHIVE_HEADER)
        for p in self.points:
            writer.writerow(
                [p.design_id, f"{p.delay:.10g}", f"{p.area:.10g}", f"{p.y:.10g}"]
            )
        return buf.getvalue()

    @classmethod
    def from_csv_text(cls, text: str) -> "ParetoArchive":
        archive = cls()
        for row in csv.DictReader(io.StringIO(text)):
            archive.points.append(
                ParetoPoint(
                    row["design_id"],
                    float(row["delay"]),
                    float(row["area"]),
                    float(row["y"]),
                )
            )
        return archive


def pareto_update(archive: ParetoArchive, point: ParetoPoint) -> ParetoArchive:
    """Operation form of ParetoArchive.update (mutates and returns the archive)."""
    archive.update(point)
    return archive


@dataclass(frozen=True)
class CampaignConfig:
    """Campaign-wide knobs; the paper-scale figures are the defaults."""

    n: int = 8
    rounds: int = 5
    samples_per_round: int = 1000
    labeled_per_round: int = 100
    unlabeled_init: int = 15000
    labeled_init: int = 1000
    train_epochs: int = 200
    predictor_epochs: int = 400
    fine_tune_epochs: int = 30
    timesteps: int = 1000
    schedule: str = "linear-abar"
    steps: int = 50
    reflect_steps: int = 25
    target_y: float = 0.7
    strength: float = 10.0
    weight: float = 0.66
    extra_stages: int = 1
    mutation_mean: float = 8.0
    selection: str = "uniform"  # or "predicted_best"
    phases: tuple[str, ...] = (PHASE_CT, PHASE_CPA)
    seed: int = 0
    jobs: int = 1

    @classmethod
    def desk_scale(cls, n: int = 8, **kw) -> "CampaignConfig":
        defaults = dict(
            n=n,
            samples_per_round=200,
            labeled_per_round=25,
            unlabeled_init=2000,
            labeled_init=200,
            train_epochs=60,
            predictor_epochs=150,
            fine_tune_epochs=10,
            steps=25,
            reflect_steps=4,
        )
        defaults.update(kw)
        return cls(**defaults)

    def config_hash(self) -> str:
        return hashlib.sha256(config_to_text(self).encode()).hexdigest()[:16]


def config_to_text(cfg: CampaignConfig) -> str:
    lines = []
    for key, value in sorted(asdict(cfg).items()):
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str, overrides: dict | None = None) -> CampaignConfig:
    """Parse the flat key-value config format; overrides win over file values."""
    raw: dict = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        raw[key.strip()] = value.strip()
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    kwargs: dict = {}
    for f_name, f_type in CampaignConfig.__dataclass_fields__.items():
        if f_name not in raw:
            continue
        value = raw[f_name]
        if f_name == "phases":
            kwargs[f_name] = tuple(v for v in str(value).split(",") if v)
        elif f_name in ("selection", "schedule"):
            kwargs[f_name] = str(value)
        elif f_name in ("target_y", "strength", "weight", "mutation_mean"):
            kwargs[f_name] = float(value)
        else:
            kwargs[f_name] = int(value)
    return CampaignConfig(**kwargs)


@dataclass
class PhaseState:
    """Mutable per-phase working set, persisted after every round."""

    phase: str
    kind: str
    width: int  # design width: n for trees, 2n for adders
    designs: list = field(default_factory=list)
    design_ids: list[str] = field(default_factory=list)
    labeled: list = field(default_factory=list)  # (design_id, design, QoRLabel)
    archive: ParetoArchive = field(default_factory=ParetoArchive)
    denoiser: object = None
    predictor: object = None
    completed_rounds: int = 0
    rounds_log: list[dict] = field(default_factory=list)
    evaluations: int = 0
    seed_evaluations: int = 0

    def seen_keys(self) -> set[bytes]:
        return {design_key(d) for d in self.designs}


class _Evaluator:
    """Counts invocations of the cost model on behalf of one phase."""

    def __init__(self, fn):
        self.fn = fn
        self.count = 0

    def __call__(self, design) -> QoRLabel:
        self.count += 1
        return self.fn(design)


def _phase_dirs(out_dir: Path, phase: str) -> dict[str, Path]:
    root = out_dir / f"phase_{phase}"
    return {
        "root": root,
        "designs": root / "designs",
        "rounds": root / "rounds",
    }


def _persist_phase(state: PhaseState, out_dir: Path) -> None:
    dirs = _phase_dirs(out_dir, state.phase)
    dirs["designs"].mkdir(parents=True, exist_ok=True)
    dirs["rounds"].mkdir(parents=True, exist_ok=True)
    for design_id, design in zip(state.design_ids, state.designs):
        path = dirs["designs"] / f"{design_id}.json"
        if not path.exists():
            path.write_text(json.dumps(design_to_json(design)) + "\n")
    with open(dirs["root"] / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("design_id", "delay1", "area1", "delay2", "area2", "y"))
        for design_id, _design, label in state.labeled:
            writer.writerow(
                [
                    design_id,
                    f"{label.delays[0]:.10g}",
                    f"{label.areas[0]:.10g}",
                    f"{label.delays[1]:.10g}",
                    f"{label.areas[1]:.10g}",
                    f"{label.y:.10g}",
                ]
            )
    (dirs["root"] / "archive.csv").write_text(state.archive.to_csv_text())
    save_checkpoint(dirs["root"] / "denoiser.pt", state.denoiser, {"phase": state.phase})
    save_checkpoint(dirs["root"] / "predictor.pt", state.predictor, {"phase": state.phase})
    (dirs["root"] / "state.json").write_text(
        json.dumps(
            {
                "format_version": 1,
                "phase": state.phase,
                "kind": state.kind,
                "width": state.width,
                "design_ids": state.design_ids,
                "completed_rounds": state.completed_rounds,
                "rounds_log": state.rounds_log,
                "evaluations": state.evaluations,
                "seed_evaluations": state.seed_evaluations,
            },
            indent=2,
        )
        + "\n"
    )


def _load_phase(out_dir: Path, phase: str, w: float) -> PhaseState | None:
    dirs = _phase_dirs(out_dir, phase)
    state_file = dirs["root"] / "state.json"
    if not state_file.exists():
        return None
    meta = json.loads(state_file.read_text())
    state = PhaseState(
        phase=meta["phase"], kind=meta["kind"], width=meta["width"]
    )
    state.design_ids = list(meta["design_ids"])
    for design_id in state.design_ids:
        doc = json.loads((dirs["designs"] / f"{design_id}.json").read_text())
        state.designs.append(design_from_json(doc))
    by_id = dict(zip(state.design_ids, state.designs))
    with open(dirs["root"] / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            label = QoRLabel(
                delays=(float(row["delay1"]), float(row["delay2"])),
                areas=(float(row["area1"]), float(row["area2"])),
                y=float(row["y"]),
                weight=w,
            )
            state.labeled.append((row["design_id"], by_id[row["design_id"]], label))
    state.archive = ParetoArchive.from_csv_text(
        (dirs["root"] / "archive.csv").read_text()
    )
    state.denoiser, _ = load_checkpoint(dirs["root"] / "denoiser.pt")
    state.predictor, _ = load_checkpoint(dirs["root"] / "predictor.pt")
    state.completed_rounds = meta["completed_rounds"]
    state.rounds_log = meta["rounds_log"]
    state.evaluations = meta["evaluations"]
    state.seed_evaluations = meta.get("seed_evaluations", 0)
    return state


def _labeled_arrays(state: PhaseState):
    designs = [d for (_i, d, _l) in state.labeled]
    ys = np.asarray([label.y for (_i, _d, label) in state.labeled], dtype=np.float32)
    return encode_designs(designs), ys


def _init_phase(
    cfg: CampaignConfig,
    phase: str,
    out_dir: Path,
    evaluator: _Evaluator,
    seed_points: list[tuple[str, object, QoRLabel]] | None = None,
) -> PhaseState:
    kind = "ct" if phase == PHASE_CT else "prefix"
    width = cfg.n if phase == PHASE_CT else 2 * cfg.n
    spec = DatasetSpec(
        kind=kind,
        n=width,
        unlabeled_count=cfg.unlabeled_init,
        labeled_count=cfg.labeled_init,
        mutation_mean=cfg.mutation_mean,
        extra_stages=cfg.extra_stages,
        rng_seed=derive_seed(cfg.seed, phase, "dataset"),
    )
    ds: Dataset = generate_dataset(spec, evaluate=evaluator)
    state = PhaseState(phase=phase, kind=kind, width=width)
    state.designs = list(ds.designs)
    state.design_ids = [f"{phase}_i{i:05d}" for i in range(len(ds.designs))]
    for idx, label in ds.labeled:
        design_id = state.design_ids[idx]
        state.labeled.append((design_id, ds.designs[idx], label))
        state.archive.update(
            ParetoPoint(design_id, label.delays[0], label.areas[0], label.y)
        )
    ids_by_key = {design_key(d): i for d, i in zip(state.designs, state.design_ids)}
    for design_id, design, label in seed_points or []:
        key = design_key(design)
        if key in ids_by_key:
            design_id = ids_by_key[key]  # label rows must reference stored designs
        else:
            state.designs.append(design)
            state.design_ids.append(design_id)
            ids_by_key[key] = design_id
        state.labeled.append((design_id, design, label))
        state.archive.update(
            ParetoPoint(design_id, label.delays[0], label.areas[0], label.y)
        )
    schedule = make_schedule(cfg.timesteps, cfg.schedule)
    state.denoiser = make_denoiser(kind, width, seed=derive_seed(cfg.seed, phase, "den-init"))
    state.predictor = make_predictor(kind, width, seed=derive_seed(cfg.seed, phase, "pre-init"))
    train_diffusion(
        state.denoiser,
        encode_designs(state.designs),
        schedule,
        TrainConfig(
            epochs=cfg.train_epochs,
            seed=derive_seed(cfg.seed, phase, "den-train"),
        ),
    )
    data, ys = _labeled_arrays(state)
    train_predictor(
        state.predictor,
        data,
        ys,
        TrainConfig(
            epochs=cfg.predictor_epochs,
            seed=derive_seed(cfg.seed, phase, "pre-train"),
        ),
    )
    state.evaluations = evaluator.count
    _persist_phase(state, out_dir)
    return state


def _legalize(design, kind: str):
    if kind == "ct":
        legal, _report = legalize_ct(design)
        return legal
    return legalize_prefix(design, force_outputs=True)


def _verify(design, kind: str, cfg: CampaignConfig, best_ct: CompressorTree | None) -> bool:
    if kind == "ct":
        n = design.n
        if n > 8:
            return not validate_ct(design)
        nl = assemble_multiplier(design)
    else:
        n = design.n // 2
        if n > 8:
            return True
        host = best_ct
        nl = assemble_multiplier(host, design)
    return verify_exhaustive(nl, n, jobs=cfg.jobs).ok


def run_round(
    state: PhaseState,
    cfg: CampaignConfig,
    round_index: int,
    evaluator: _Evaluator,
    out_dir: Path,
    best_ct: CompressorTree | None = None,
) -> PhaseState:
    """One explore/evaluate/fine-tune round; persists the updated state."""
    schedule = make_schedule(cfg.timesteps, cfg.schedule)
    gcfg = GuidanceConfig(
        target_y=cfg.target_y,
        strength=cfg.strength,
        reflect_steps=cfg.reflect_steps,
        steps=cfg.steps,
    )
    batch = sample_guided(
        cfg.samples_per_round,
        gcfg,
        state.denoiser,
        state.predictor,
        schedule,
        kind=state.kind,
        n=state.width,
        extra_stages=cfg.extra_stages,
        seed=derive_seed(cfg.seed, state.phase, round_index, "sample"),
    )
    legal, predicted = [], []
    legalize_failures = 0
    for design, diag in zip(batch.designs, batch.diagnostics):
        if design is None:
            continue
        try:
            legal.append(_legalize(design, state.kind))
            predicted.append(diag.predicted_y)
        except LegalizationError:
            legalize_failures += 1
    if not legal:
        raise CampaignError(
            f"round {round_index} of phase {state.phase}: all "
            f"{cfg.samples_per_round} samples failed legalization"
        )
    verified, verified_pred = [], []
    verify_failures = 0
    for design, pred_y in zip(legal, predicted):
        if _verify(design, state.kind, cfg, best_ct):
            verified.append(design)
            verified_pred.append(pred_y)
        else:
            verify_failures += 1
    if not verified:
        raise CampaignError(
            f"round {round_index} of phase {state.phase}: no sample survived verification"
        )
    rng = np.random.default_rng(derive_seed(cfg.seed, state.phase, round_index, "select"))
    n_label = min(cfg.labeled_per_round, len(verified))
    if cfg.selection == "predicted_best":
        order = np.argsort(
            [float("inf") if p is None else p for p in verified_pred], kind="stable"
        )
        picks = list(order[:n_label])
    else:
        picks = sorted(int(i) for i in rng.choice(len(verified), n_label, replace=False))
    ids_by_key = {design_key(d): i for d, i in zip(state.designs, state.design_ids)}
    added = 0
    ids_by_pos: dict[int, str] = {}
    for pos, design in enumerate(verified):
        key = design_key(design)
        if key in ids_by_key:
            ids_by_pos[pos] = ids_by_key[key]  # duplicate: reuse the stored id
            continue
        design_id = f"{state.phase}_r{round_index:02d}_{pos:04d}"
        ids_by_pos[pos] = design_id
        ids_by_key[key] = design_id
        state.designs.append(design)
        state.design_ids.append(design_id)
        added += 1
    best_of_round = None
    for pos in picks:
        design = verified[pos]
        label = evaluator(design)
        design_id = ids_by_pos[pos]
        state.labeled.append((design_id, design, label))
        state.archive.update(
            ParetoPoint(design_id, label.delays[0], label.areas[0], label.y)
        )
        if best_of_round is None or label.y < best_of_round:
            best_of_round = label.y
    train_diffusion(
        state.denoiser,
        encode_designs(state.designs),
        schedule,
        TrainConfig(
            epochs=cfg.fine_tune_epochs,
            seed=derive_seed(cfg.seed, state.phase, round_index, "ft-den"),
        ),
    )
    data, ys = _labeled_arrays(state)
    train_predictor(
        state.predictor,
        data,
        ys,
        TrainConfig(
            epochs=cfg.fine_tune_epochs,
            seed=derive_seed(cfg.seed, state.phase, round_index, "ft-pre"),
        ),
    )
    state.evaluations = evaluator.count
    state.completed_rounds = round_index
    best = state.archive.best()
    state.rounds_log.append(
        {
            "round": round_index,
            "sampled": cfg.samples_per_round,
            "legalize_failures": legalize_failures,
            "verify_failures": verify_failures,
            "corpus_added": added,
            "labeled": n_label,
            "best_of_round": best_of_round,
            "best_so_far": None if best is None else best.y,
        }
    )
    dirs = _phase_dirs(out_dir, state.phase)
    dirs["rounds"].mkdir(parents=True, exist_ok=True)
    round_dir = dirs["rounds"] / f"round_{round_index:02d}"
    round_dir.mkdir(exist_ok=True)
    with open(round_dir / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("sample", "finite", "predicted_y", "drv_count"))
        writer.writeheader()
        for diag in batch.diagnostics:
            writer.writerow(diag.to_row())
    _persist_phase(state, out_dir)
    return state


def _phase_report(state: PhaseState, initial_labels: int) -> dict:
    best = state.archive.best()
    return {
        "kind": state.kind,
        "width": state.width,
        "initial_labels": initial_labels,
        "seed_labels": state.seed_evaluations,
        "rounds": state.rounds_log,
        "evaluations": state.evaluations,
        "archive_size": len(state.archive.points),
        "best": None
        if best is None
        else {
            "design_id": best.design_id,
            "delay": best.delay,
            "area": best.area,
            "y": best.y,
        },
    }


def _best_design(state: PhaseState):
    best = state.archive.best()
    if best is None:
        raise CampaignError(f"phase {state.phase} has an empty archive")
    for design_id, design, _label in state.labeled:
        if design_id == best.design_id:
            return design
    raise CampaignError(f"archived design {best.design_id} has no stored tensor")


def run_campaign(cfg: CampaignConfig, out_dir: str | Path, resume: bool = False) -> dict:
    """Run (or resume) the full campaign; returns the report dictionary.

    Phase 1 explores compressor trees against the serial adder; phase 2
    freezes the best tree and explores prefix adders for the integrated
    multiplier, with the phase-1 default adder evaluated up front so the
    integrated search can never regress below the phase-1 best.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_path = out / "config.txt"
    if resume and config_path.exists():
        on_disk = config_from_text(config_path.read_text())
        # rounds and jobs are execution horizons, not round inputs; everything
        # else must match or the replayed rounds would diverge.
        if replace(on_disk, rounds=cfg.rounds, jobs=cfg.jobs) != cfg:
            raise CampaignError("resume config does not match the campaign directory")
    config_path.write_text(config_to_text(cfg))
    (out / "manifest.json").write_text(
        json.dumps(
            {
                "format_version": 1,
                "tool": "arithopt",
                "version": TOOL_VERSION,
                "config_hash": cfg.config_hash(),
                "seed": cfg.seed,
            },
            indent=2,
        )
        + "\n"
    )
    phase_reports: dict[str, dict] = {}
    best_ct: CompressorTree | None = None
    ct_state: PhaseState | None = None
    if PHASE_CT in cfg.phases:
        evaluator = _Evaluator(
            lambda d: evaluate_design(d, w=cfg.weight, extra_stages=cfg.extra_stages)
        )
        state = _load_phase(out, PHASE_CT, cfg.weight) if resume else None
        if state is None:
            state = _init_phase(cfg, PHASE_CT, out, evaluator)
        else:
            evaluator.count = state.evaluations
        for rnd in range(state.completed_rounds + 1, cfg.rounds + 1):
            state = run_round(state, cfg, rnd, evaluator, out)
        ct_state = state
        best_ct = _best_design(state)
        phase_reports[PHASE_CT] = _phase_report(state, cfg.labeled_init)
    if PHASE_CPA in cfg.phases:
        if best_ct is None:
            raise CampaignError("adder phase needs the tree phase first")
        frozen_ct = best_ct
        evaluator = _Evaluator(
            lambda d: evaluate_design(
                d, ct=frozen_ct, w=cfg.weight, extra_stages=cfg.extra_stages
            )
        )
        state = _load_phase(out, PHASE_CPA, cfg.weight) if resume else None
        if state is None:
            default_cpa = serial_prefix(2 * cfg.n)
            seed_label = evaluator(default_cpa)
            seed_points = [(f"{PHASE_CPA}_seed_serial", default_cpa, seed_label)]
            state = _init_phase(cfg, PHASE_CPA, out, evaluator, seed_points)
            state.seed_evaluations = 1
            _persist_phase(state, out)
        else:
            evaluator.count = state.evaluations
        for rnd in range(state.completed_rounds + 1, cfg.rounds + 1):
            state = run_round(state, cfg, rnd, evaluator, out, best_ct=frozen_ct)
        phase_reports[PHASE_CPA] = _phase_report(state, cfg.labeled_init)
        final_archive = state.archive
    else:
        final_archive = ct_state.archive if ct_state else ParetoArchive()
    (out / "archive.csv").write_text(final_archive.to_csv_text())
    total_evals = sum(rep["evaluations"] for rep in phase_reports.values())
    final_best = final_archive.best()
    report = {
        "format_version": 1,
        "config_hash": cfg.config_hash(),
        "phases": phase_reports,
        "total_evaluations": total_evals,
        "best": None
        if final_best is None
        else {
            "design_id": final_best.design_id,
            "delay": final_best.delay,
            "area": final_best.area,
            "y": final_best.y,
        },
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report
