"""Design corpora: classic seeds, random mutation walks, dataset persistence.

The unlabeled corpus is grown by random-walk mutation chains starting from the
classic constructions; every emitted design is legalized, so the corpus stays
on the legal manifold. A uniform random subset is labeled with the analytical
cost model.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .codec import design_from_json, design_key, design_to_json
from .ct import (
    FULL_ADDER,
    HALF_ADDER,
    CompressorTree,
    dadda_tree,
    validate_ct,
    wallace_tree,
)
from .legalize import LegalizationError, legalize_ct, legalize_prefix
from .prefix import (
    PrefixBitmap,
    brent_kung_prefix,
    kogge_stone_prefix,
    serial_prefix,
    sklansky_prefix,
    validate_prefix,
)
from .qor import QoRLabel, evaluate_design

KIND_CT = "ct"
KIND_PREFIX = "prefix"

CT_SEEDS = ("wallace", "dadda")
PREFIX_SEEDS = ("serial", "sklansky", "kogge_stone", "brent_kung")

_SEED_BUILDERS = {
    "wallace": wallace_tree,
    "dadda": dadda_tree,
    "serial": serial_prefix,
    "sklansky": sklansky_prefix,
    "kogge_stone": kogge_stone_prefix,
    "brent_kung": brent_kung_prefix,
}

LABELS_HEADER = ("design_id", "delay1", "area1", "delay2", "area2", "y")


class MutationError(RuntimeError):
    """No legal mutant found within the retry budget."""


def seed_design(n: int, kind: str, extra_stages: int = 1) -> CompressorTree | PrefixBitmap:
    """Canonical construction by name; always legal."""
    if kind in ("wallace", "dadda"):
        return _SEED_BUILDERS[kind](n, extra_stages)
    if kind in _SEED_BUILDERS:
        return _SEED_BUILDERS[kind](n)
    raise ValueError(f"unknown seed kind {kind!r}")


def mutate_ct(
    tree: CompressorTree, rng: np.random.Generator, max_retries: int = 30
) -> CompressorTree:
    """One random edit (stage swap, add, delete, or kind replace) plus repair.

    Retries with a fresh edit when the repair fails; the output is always
    legal.
    """
    for _ in range(max_retries):
        edit = rng.integers(4)
        counts = tree.counts
        candidate = None
        if edit == 0:  # swap one compressor between two stages of a column
            spots = np.argwhere(counts > 0)
            if len(spots) == 0:
                edit = 1
            else:
                k, c, s1 = spots[rng.integers(len(spots))]
                s2 = int(rng.integers(tree.stages))
                if s2 == s1:
                    continue
                candidate = tree.with_deltas([(k, c, s1, -1), (k, c, s2, +1)])
        if edit == 1:  # add
            k = int(rng.integers(2))
            c = int(rng.integers(tree.columns))
            s = int(rng.integers(tree.stages))
            candidate = tree.with_deltas([(k, c, s, +1)])
        elif edit == 2:  # delete
            spots = np.argwhere(counts > 0)
            if len(spots) == 0:
                continue
            k, c, s = spots[rng.integers(len(spots))]
            candidate = tree.with_deltas([(k, c, s, -1)])
        elif edit == 3:  # replace kind in place
            spots = np.argwhere(counts > 0)
            if len(spots) == 0:
                continue
            k, c, s = spots[rng.integers(len(spots))]
            candidate = tree.with_deltas([(k, c, s, -1), (1 - k, c, s, +1)])
        if candidate is None:
            continue
        try:
            legal, _ = legalize_ct(candidate)
            return legal
        except LegalizationError:
            continue
    raise MutationError(f"no legal mutant of the n={tree.n} tree in {max_retries} tries")


def mutate_prefix(p: PrefixBitmap, rng: np.random.Generator) -> PrefixBitmap:
    """Flip one non-diagonal node and repair; output is a valid, complete bitmap."""
    if p.n < 2:
        raise ValueError("cannot mutate a 1-bit bitmap")
    while True:
        i = int(rng.integers(1, p.n))
        j = int(rng.integers(0, i))
        break
    flipped = p.with_bit(i, j, 0 if p.bits[i, j] else 1)
    return legalize_prefix(flipped, force_outputs=True)


def mutate(design, rng: np.random.Generator):
    if isinstance(design, CompressorTree):
        return mutate_ct(design, rng)
    return mutate_prefix(design, rng)


@dataclass(frozen=True)
class DatasetSpec:
    """Corpus recipe: bit-width, sizes, seeds, mutation statistics, RNG seed."""

    kind: str
    n: int
    unlabeled_count: int = 2000
    labeled_count: int = 200
    seeds: tuple[str, ...] = ()
    mutation_mean: float = 8.0
    chain_restart: int = 40
    extra_stages: int = 1
    rng_seed: int = 0
    greedy: bool = False

    def __post_init__(self):
        if self.kind not in (KIND_CT, KIND_PREFIX):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.unlabeled_count <= 0 or self.labeled_count <= 0:
            raise ValueError("dataset counts must be positive")
        if self.labeled_count > self.unlabeled_count:
            raise ValueError("cannot label more designs than generated")
        if not self.seeds:
            default = CT_SEEDS if self.kind == KIND_CT else PREFIX_SEEDS
            object.__setattr__(self, "seeds", default)

    @classmethod
    def paper_scale(cls, kind: str, n: int, **kw) -> "DatasetSpec":
        return cls(kind=kind, n=n, unlabeled_count=15000, labeled_count=1000, **kw)

    @classmethod
    def desk_scale(cls, kind: str, n: int, **kw) -> "DatasetSpec":
        return cls(kind=kind, n=n, unlabeled_count=2000, labeled_count=200, **kw)


@dataclass
class Dataset:
    spec: DatasetSpec
    designs: list = field(default_factory=list)
    labeled: list = field(default_factory=list)  # (index into designs, QoRLabel)

    def design_id(self, index: int) -> str:
        return f"d{index:05d}"


def generate_dataset(
    spec: DatasetSpec,
    evaluate: Callable[[object], QoRLabel] | None = None,
) -> Dataset:
    """Grow the corpus by mutation walks from the seeds, then label a subset.

    Pure function of (spec, rng seed). Designs are deduplicated by exact
    tensor hash; if the design space is too small to fill the requested count
    with distinct designs, the walk tops up with duplicates after a bounded
    number of attempts.
    """
    rng = np.random.default_rng(spec.rng_seed)
    if evaluate is None:
        evaluate = lambda d: evaluate_design(d, extra_stages=spec.extra_stages)
    seeds = [seed_design(spec.n, kind, spec.extra_stages) for kind in spec.seeds]
    designs: list = []
    seen: set[bytes] = set()

    def admit(design) -> None:
        key = design_key(design)
        if key not in seen:
            seen.add(key)
            designs.append(design)

    for s in seeds:
        admit(s)
    attempts = 0
    max_attempts = 60 * spec.unlabeled_count
    current = seeds[0]
    edits_done = spec.chain_restart  # force a restart on the first iteration
    best_y = None
    while len(designs) < spec.unlabeled_count and attempts < max_attempts:
        attempts += 1
        if edits_done >= spec.chain_restart:
            current = seeds[int(rng.integers(len(seeds)))]
            edits_done = 0
            best_y = None
        hops = 1 + int(rng.geometric(1.0 / spec.mutation_mean))
        for _ in range(hops):
            nxt = mutate(current, rng)
            if spec.greedy:
                y_next = evaluate(nxt).y
                if best_y is None or y_next <= best_y:
                    best_y = y_next
                    current = nxt
            else:
                current = nxt
        edits_done += hops
        admit(current)
    while len(designs) < spec.unlabeled_count:
        designs.append(designs[int(rng.integers(len(designs)))])
    picks = rng.choice(len(designs), size=spec.labeled_count, replace=False)
    labeled = [(int(i), evaluate(designs[int(i)])) for i in sorted(picks)]
    return Dataset(spec=spec, designs=designs, labeled=labeled)


def validate_dataset(ds: Dataset) -> bool:
    """Every design in the corpus is legal."""
    for d in ds.designs:
        problems = validate_ct(d) if isinstance(d, CompressorTree) else validate_prefix(d)
        if problems:
            return False
    return True


def save_dataset(ds: Dataset, out_dir: str | Path) -> None:
    """Directory of JSON designs plus a CSV label index."""
    out = Path(out_dir)
    (out / "designs").mkdir(parents=True, exist_ok=True)
    for i, design in enumerate(ds.designs):
        path = out / "designs" / f"{ds.design_id(i)}.json"
        path.write_text(json.dumps(design_to_json(design)) + "\n")
    with open(out / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABELS_HEADER)
        for i, label in ds.labeled:
            writer.writerow(
                [
                    ds.design_id(i),
                    f"{label.delays[0]:.6f}",
                    f"{label.areas[0]:.6f}",
                    f"{label.delays[1]:.6f}",
                    f"{label.areas[1]:.6f}",
                    f"{label.y:.10f}",
                ]
            )
    meta = {
        "format_version": 1,
        "kind": ds.spec.kind,
        "n": ds.spec.n,
        "unlabeled_count": len(ds.designs),
        "labeled_count": len(ds.labeled),
        "rng_seed": ds.spec.rng_seed,
    }
    (out / "dataset.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_dataset(in_dir: str | Path, w: float = 0.66) -> Dataset:
    src = Path(in_dir)
    meta = json.loads((src / "dataset.json").read_text())
    spec = DatasetSpec(
        kind=meta["kind"],
        n=meta["n"],
        unlabeled_count=max(1, meta["unlabeled_count"]),
        labeled_count=max(1, min(meta["labeled_count"], meta["unlabeled_count"])),
        rng_seed=meta["rng_seed"],
    )
    files = sorted((src / "designs").glob("d*.json"))
    designs = [design_from_json(json.loads(f.read_text())) for f in files]
    labeled = []
    with open(src / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            idx = int(row["design_id"][1:])
            label = QoRLabel(
                delays=(float(row["delay1"]), float(row["delay2"])),
                areas=(float(row["area1"]), float(row["area2"])),
                y=float(row["y"]),
                weight=w,
            )
            labeled.append((idx, label))
    return Dataset(spec=spec, designs=designs, labeled=labeled)
