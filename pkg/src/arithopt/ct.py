"""Compressor-tree representation and design-rule checking.

A compressor tree is stored as an integer tensor ``counts[k, c, s]``: how many
compressors of kind k (0 = full adder, 1 = half adder) sit in column c at
reduction stage s. Column 0 is the least significant product column; stage 0
is the first reduction stage. The companion occupancy matrix V[c, s] tracks
how many partial-product bits each column holds entering each stage.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drv import OVER_COMPRESSION, UNDER_COMPRESSION, DesignRuleViolation

FULL_ADDER = 0
HALF_ADDER = 1
COMPRESSOR_KINDS = 2

#: Extra stages on top of the theoretical minimum; widens the set of feasible
#: trees at a small cost in tensor size.
DEFAULT_EXTRA_STAGES = 1


def wallace_min_stages(n: int) -> int:
    """Smallest number of 3:2 reduction stages that can flatten n rows to two.

    One stage turns u rows into at most floor(3u/2) source rows, so the
    reducible height grows as u(1) = 3, u(s) = floor(3 * u(s-1) / 2); the
    answer is the first s with u(s) >= n.
    """
    if n < 2:
        raise ValueError(f"bit-width must be >= 2, got {n}")
    u, s = 3, 1
    while u < n:
        u = (3 * u) // 2
        s += 1
    return s


def initial_pp_counts(n: int) -> np.ndarray:
    """Partial-product bits per column emitted by the AND-gate generator.

    Column c collects the bits a_i & b_j with i + j = c; the top column 2n-1
    starts empty (it only ever receives carries). The counts sum to n^2.
    """
    if n < 2:
        raise ValueError(f"bit-width must be >= 2, got {n}")
    counts = np.zeros(2 * n, dtype=np.int64)
    for c in range(2 * n - 1):
        counts[c] = min(c + 1, n, 2 * n - 1 - c)
    return counts


@dataclass(frozen=True, eq=False)
class CompressorTree:
    """Stage-resolved compressor counts for one n-bit multiplier."""

    n: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.ascontiguousarray(np.asarray(self.counts, dtype=np.int64))
        if counts.ndim != 3:
            raise ValueError("counts must have shape [2, 2n, S]")
        if counts.shape[0] != COMPRESSOR_KINDS or counts.shape[1] != 2 * self.n:
            raise ValueError(
                f"counts shape {counts.shape} inconsistent with n={self.n}"
            )
        if counts.shape[2] < 1:
            raise ValueError("tree needs at least one stage")
        if (counts < 0).any():
            raise ValueError("compressor counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, n: int, extra_stages: int = DEFAULT_EXTRA_STAGES) -> "CompressorTree":
        stages = wallace_min_stages(n) + extra_stages
        return cls(n, np.zeros((COMPRESSOR_KINDS, 2 * n, stages), dtype=np.int64))

    @property
    def columns(self) -> int:
        return 2 * self.n

    @property
    def stages(self) -> int:
        return int(self.counts.shape[2])

    def with_deltas(self, deltas) -> "CompressorTree":
        """New tree with (kind, column, stage, delta) adjustments applied."""
        counts = self.counts.copy()
        for k, c, s, dv in deltas:
            counts[k, c, s] += dv
        return CompressorTree(self.n, counts)

    def key(self) -> bytes:
        return self.counts.tobytes()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CompressorTree)
            and self.n == other.n
            and np.array_equal(self.counts, other.counts)
        )

    def __hash__(self) -> int:
        return hash((self.n, self.counts.tobytes()))


def propagate_counts(tree: CompressorTree) -> np.ndarray:
    """Column occupancy V of shape [2n, S+1] under exact count bookkeeping.

    V[:, 0] is the AND-array profile. Each stage removes 2 bits per full adder
    and 1 per half adder in-column, and adds one bit per compressor of the
    column to the right's next stage. No legality is assumed: entries may go
    negative so validators can spot over-consumption downstream.
    """
    t = tree.counts
    v = np.zeros((tree.columns, tree.stages + 1), dtype=np.int64)
    v[:, 0] = initial_pp_counts(tree.n)
    for s in range(tree.stages):
        fa = t[FULL_ADDER, :, s]
        ha = t[HALF_ADDER, :, s]
        nxt = v[:, s] - 2 * fa - ha
        nxt[1:] += fa[:-1] + ha[:-1]
        v[:, s + 1] = nxt
    return v


def consumed_bits(tree: CompressorTree) -> np.ndarray:
    """Bits consumed per (column, stage): 3 per FA plus 2 per HA."""
    return 3 * tree.counts[FULL_ADDER] + 2 * tree.counts[HALF_ADDER]


def wallace_tree(n: int, extra_stages: int = DEFAULT_EXTRA_STAGES) -> CompressorTree:
    """Classic Wallace reduction, column-count form.

    Each stage packs floor(h/3) full adders per column and one half adder when
    the residue is 2 (half adders are deferred past stage 0, which keeps the
    construction on the minimum-stage schedule). Always legal; finishes within
    wallace_min_stages(n) stages.
    """
    stages = wallace_min_stages(n) + extra_stages
    counts = np.zeros((COMPRESSOR_KINDS, 2 * n, stages), dtype=np.int64)
    v = initial_pp_counts(n)
    for s in range(stages):
        if (v <= 2).all():
            break
        fa = v // 3
        ha = np.where(v % 3 == 2, 1, 0).astype(np.int64)
        if s == 0:
            ha[:] = 0
        counts[FULL_ADDER, :, s] = fa
        counts[HALF_ADDER, :, s] = ha
        nxt = v - 2 * fa - ha
        nxt[1:] += fa[:-1] + ha[:-1]
        v = nxt
    return CompressorTree(n, counts)


def dadda_tree(n: int, extra_stages: int = DEFAULT_EXTRA_STAGES) -> CompressorTree:
    """Classic Dadda reduction: lazily clip column heights to the 3/2 ladder.

    Stage targets walk the ladder d = ..., 9, 6, 4, 3, 2 downward from the
    largest value below the initial height, consuming the fewest compressors
    that keep every next-stage height (incoming carries included) within
    target.
    """
    ladder = [2]
    while ladder[-1] < n:
        ladder.append((3 * ladder[-1]) // 2)
    targets = [d for d in reversed(ladder) if d < n] or [2]
    stages = wallace_min_stages(n) + extra_stages
    counts = np.zeros((COMPRESSOR_KINDS, 2 * n, stages), dtype=np.int64)
    v = initial_pp_counts(n)
    for s, target in enumerate(targets):
        carry_in = 0
        nxt = np.zeros_like(v)
        for c in range(2 * n):
            h = int(v[c])
            fa = ha = 0
            while h - 2 * fa - ha + carry_in > target:
                if h - 2 * fa - ha + carry_in == target + 1 and 3 * fa + 2 * (ha + 1) <= h:
                    ha += 1
                elif 3 * (fa + 1) + 2 * ha <= h:
                    fa += 1
                elif 3 * fa + 2 * (ha + 1) <= h:
                    ha += 1
                else:
                    break
            counts[FULL_ADDER, c, s] = fa
            counts[HALF_ADDER, c, s] = ha
            nxt[c] = h - 2 * fa - ha + carry_in
            carry_in = fa + ha
        v = nxt
    return CompressorTree(n, counts)


def violation_score(tree: CompressorTree) -> tuple[int, int]:
    """(violation count, total magnitude) without building violation objects.

    The legalizer's hot path: the count is the primary greedy objective, the
    summed magnitude breaks plateaus where one repair unit does not yet
    remove a whole violation.
    """
    v = propagate_counts(tree)
    excess = consumed_bits(tree) - v[:, :-1]
    over = excess > 0
    deficit = v[:, -1] - 2
    under = deficit > 0
    count = int(over.sum()) + int(under.sum())
    magnitude = int(excess[over].sum()) + int(deficit[under].sum())
    return count, magnitude


def validate_ct(tree: CompressorTree) -> list[DesignRuleViolation]:
    """Design-rule check for a compressor tree.

    Over-compression: a stage consumes more bits than its column holds (the
    occupancy may already be negative from upstream damage). Under-compression:
    a column ends with more than two bits. Violations are ordered
    over-compression by (stage, column), then under-compression by column, so
    upstream damage is surfaced first.
    """
    v = propagate_counts(tree)
    excess = consumed_bits(tree) - v[:, :-1]
    out: list[DesignRuleViolation] = []
    over = np.argwhere(excess.T > 0)  # rows (stage, column)
    for s, c in over:
        out.append(
            DesignRuleViolation(OVER_COMPRESSION, int(c), int(s), int(excess[c, s]))
        )
    final = v[:, -1]
    for c in np.nonzero(final > 2)[0]:
        out.append(
            DesignRuleViolation(
                UNDER_COMPRESSION, int(c), tree.stages, int(final[c] - 2)
            )
        )
    return out
