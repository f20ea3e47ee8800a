"""Greedy repair of design-rule violations in generated designs.

Compressor trees are fixed by local actions (split/replace/delete/fuse/add
compressors) chosen greedily to shrink the violation set, with a detour rule
when no action helps immediately. Prefix bitmaps are fixed by filling missing
lower parents.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ct import (
    FULL_ADDER,
    HALF_ADDER,
    CompressorTree,
    consumed_bits,
    initial_pp_counts,
    propagate_counts,
    validate_ct,
    violation_score,
)
from .drv import OVER_COMPRESSION, UNDER_COMPRESSION, DesignRuleViolation
from .prefix import PrefixBitmap, _split_exists

SPLIT_FA = "SplitFA"
REPLACE_FA = "ReplaceFA"
DELETE_HA = "DeleteHA"
FUSE_FA = "FuseFA"
REPLACE_HA = "ReplaceHA"
ADD_HA = "AddHA"

#: Tie-break order for action selection, as enlisted for over- then
#: under-compression repair.
ACTION_KINDS = (SPLIT_FA, REPLACE_FA, DELETE_HA, FUSE_FA, REPLACE_HA, ADD_HA)
_ACTION_RANK = {kind: rank for rank, kind in enumerate(ACTION_KINDS)}

# Count adjustments per action: (compressor kind, delta) applied at (c, s).
_ACTION_DELTAS = {
    SPLIT_FA: ((FULL_ADDER, -1), (HALF_ADDER, +2)),
    REPLACE_FA: ((FULL_ADDER, -1), (HALF_ADDER, +1)),
    DELETE_HA: ((HALF_ADDER, -1),),
    FUSE_FA: ((HALF_ADDER, -2), (FULL_ADDER, +1)),
    REPLACE_HA: ((HALF_ADDER, -1), (FULL_ADDER, +1)),
    ADD_HA: ((HALF_ADDER, +1),),
}

# Additional bits the action consumes at (c, s); negative values free bits.
_ACTION_EXTRA_BITS = {
    SPLIT_FA: 1,
    REPLACE_FA: -1,
    DELETE_HA: -2,
    FUSE_FA: -1,
    REPLACE_HA: 1,
    ADD_HA: 2,
}


class InapplicableActionError(ValueError):
    """Action precondition does not hold on this tree."""


class LegalizationError(RuntimeError):
    """Legalization failed; carries the progress report."""

    def __init__(self, message: str, report: "LegalizeReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class LegalizeAction:
    kind: str
    column: int
    stage: int

    def sort_key(self) -> tuple[int, int, int]:
        return (_ACTION_RANK[self.kind], self.column, self.stage)


@dataclass
class LegalizeReport:
    steps_taken: int = 0
    detours: int = 0
    final_violations: int = 0
    trace: list[LegalizeAction] = field(default_factory=list)
    #: columns whose schedule was rebuilt outright after the greedy walk
    #: stalled; empty for pure action-trace repairs
    rebuilt_columns: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "steps_taken": self.steps_taken,
            "detours": self.detours,
            "final_violations": self.final_violations,
            "trace": [
                {"kind": a.kind, "column": a.column, "stage": a.stage}
                for a in self.trace
            ],
            "rebuilt_columns": self.rebuilt_columns,
        }


def _spare_bits(tree: CompressorTree, occupancy: np.ndarray, c: int, s: int) -> int:
    return int(occupancy[c, s] - consumed_bits(tree)[c, s])


def action_applicable(
    tree: CompressorTree, action: LegalizeAction, occupancy: np.ndarray | None = None
) -> bool:
    """Precondition check: enough compressors to edit and enough spare bits."""
    c, s = action.column, action.stage
    if not (0 <= c < tree.columns and 0 <= s < tree.stages):
        return False
    if occupancy is None:
        occupancy = propagate_counts(tree)
    for kind, delta in _ACTION_DELTAS[action.kind]:
        if delta < 0 and tree.counts[kind, c, s] < -delta:
            return False
    extra = _ACTION_EXTRA_BITS[action.kind]
    if extra > 0 and _spare_bits(tree, occupancy, c, s) < extra:
        return False
    return True


def apply_action(tree: CompressorTree, action: LegalizeAction) -> CompressorTree:
    """Apply one repair action; raises InapplicableActionError on a failed precondition."""
    if not action_applicable(tree, action):
        raise InapplicableActionError(f"{action} not applicable")
    c, s = action.column, action.stage
    deltas = [(kind, c, s, dv) for kind, dv in _ACTION_DELTAS[action.kind]]
    return tree.with_deltas(deltas)


def candidate_actions(
    tree: CompressorTree, violation: DesignRuleViolation
) -> list[LegalizeAction]:
    """Repair candidates for one violation, filtered to applicable actions.

    Over-compression at (c, s) is relieved by feeding column c more bits
    (splitting an FA one column to the left at an earlier stage), consuming
    fewer (FA -> HA at or before s), or dropping an HA at (c, s) outright.
    Under-compression at column c is relieved by cutting incoming carries
    (fusing HA pairs one column left) or compressing harder in-column
    (HA -> FA, or a fresh HA) at any stage.
    """
    occupancy = propagate_counts(tree)
    cands: list[LegalizeAction] = []
    if violation.kind == OVER_COMPRESSION:
        c, s = violation.column, violation.stage
        if c > 1:
            for s2 in range(s):
                cands.append(LegalizeAction(SPLIT_FA, c - 1, s2))
        for s2 in range(s + 1):
            cands.append(LegalizeAction(REPLACE_FA, c, s2))
        cands.append(LegalizeAction(DELETE_HA, c, s))
    elif violation.kind == UNDER_COMPRESSION:
        c = violation.column
        if c > 1:
            for s2 in range(tree.stages):
                cands.append(LegalizeAction(FUSE_FA, c - 1, s2))
        for s2 in range(tree.stages):
            cands.append(LegalizeAction(REPLACE_HA, c, s2))
        for s2 in range(tree.stages):
            cands.append(LegalizeAction(ADD_HA, c, s2))
    else:
        raise ValueError(f"no compressor-tree repair for kind {violation.kind!r}")
    return [a for a in cands if action_applicable(tree, a, occupancy)]


def _raw_score(base: np.ndarray, counts: np.ndarray) -> tuple[int, int]:
    """(violation count, total magnitude) straight off a counts array."""
    stages = counts.shape[2]
    v = base.copy()
    consumed = 3 * counts[FULL_ADDER] + 2 * counts[HALF_ADDER]
    count = 0
    magnitude = 0
    for s in range(stages):
        excess = consumed[:, s] - v
        over = excess > 0
        count += int(over.sum())
        magnitude += int(excess[over].sum())
        nxt = v - 2 * counts[FULL_ADDER, :, s] - counts[HALF_ADDER, :, s]
        nxt[1:] += counts[FULL_ADDER, :-1, s] + counts[HALF_ADDER, :-1, s]
        v = nxt
    deficit = v - 2
    under = deficit > 0
    count += int(under.sum())
    magnitude += int(deficit[under].sum())
    return count, magnitude


def _resynthesize_suffix(
    n: int, counts: np.ndarray, start_col: int
) -> np.ndarray | None:
    """Rebuild the schedule of columns >= start_col with a lazy completion.

    Keeps every column left of ``start_col`` untouched (their carries feed the
    rebuilt region), then re-derives per-stage compressor counts column by
    column against the classic 3/2 height ladder. Returns None when the fixed
    prefix back-loads carries so late that no schedule fits in the remaining
    stages; start_col = 0 always succeeds (plain ladder reduction).
    """
    cols, stages = counts.shape[1], counts.shape[2]
    ladder = [2]
    while len(ladder) < stages + 1:
        ladder.append((3 * ladder[-1]) // 2)
    out = counts.copy()
    out[:, start_col:, :] = 0
    base = initial_pp_counts(n).astype(np.int64)
    v = np.zeros(cols, dtype=np.int64)
    v[:] = base
    # occupancy per column at the current stage; carries tracked per stage
    heights = base.copy()
    for s in range(stages):
        prev_carry = 0
        nxt = np.zeros(cols, dtype=np.int64)
        for c in range(cols):
            h = int(heights[c])
            if c < start_col:
                fa = int(out[FULL_ADDER, c, s])
                ha = int(out[HALF_ADDER, c, s])
                if 3 * fa + 2 * ha > h:
                    return None  # the untouched prefix is itself broken here
            else:
                target = ladder[stages - 1 - s]
                fa = ha = 0
                while h - 2 * fa - ha + prev_carry > target:
                    if (
                        h - 2 * fa - ha + prev_carry == target + 1
                        and 3 * fa + 2 * (ha + 1) <= h
                    ):
                        ha += 1
                    elif 3 * (fa + 1) + 2 * ha <= h:
                        fa += 1
                    elif 3 * fa + 2 * (ha + 1) <= h:
                        ha += 1
                    else:
                        return None  # not enough consumable bits this stage
                out[FULL_ADDER, c, s] = fa
                out[HALF_ADDER, c, s] = ha
            nxt[c] = h - 2 * fa - ha + prev_carry
            prev_carry = fa + ha
        heights = nxt
    if (heights > 2).any() or (heights < 0).any():
        return None
    return out


def _first_violation(tree: CompressorTree) -> DesignRuleViolation | None:
    """First violation in validator order without building the full list."""
    v = propagate_counts(tree)
    excess = consumed_bits(tree) - v[:, :-1]
    overs = np.argwhere(excess.T > 0)
    if len(overs):
        s, c = int(overs[0][0]), int(overs[0][1])
        return DesignRuleViolation(OVER_COMPRESSION, c, s, int(excess[c, s]))
    unders = np.nonzero(v[:, -1] > 2)[0]
    if len(unders):
        c = int(unders[0])
        return DesignRuleViolation(
            UNDER_COMPRESSION, c, tree.stages, int(v[c, -1] - 2)
        )
    return None


def legalize_ct(
    tree: CompressorTree, max_steps: int = 5000
) -> tuple[CompressorTree, LegalizeReport]:
    """Repair a compressor tree by greedy local actions.

    Each step targets the first violation, tries every candidate action and
    keeps the one minimizing the resulting (violation count, total magnitude)
    pair, ties broken by action kind, then column, then stage. A step that
    fails to shrink the violation set is still taken as a detour; states are
    never revisited (the loop is deterministic, so a revisit could only
    cycle), and when a violation's own candidates are exhausted the search
    widens to every violation's candidates, then to any applicable action.
    Raises LegalizationError when the step budget runs out or nothing applies.
    """
    report = LegalizeReport()
    n = tree.n
    base = initial_pp_counts(n).astype(np.int64)
    counts = tree.counts.copy()
    seen_states: set[bytes] = {counts.tobytes()}
    current = CompressorTree(n, counts)
    score_now = violation_score(current)

    def trials_of(candidates):
        out = []
        for action in sorted(candidates, key=LegalizeAction.sort_key):
            scratch = counts.copy()
            c, s = action.column, action.stage
            for kind, delta in _ACTION_DELTAS[action.kind]:
                scratch[kind, c, s] += delta
            key = scratch.tobytes()
            if key in seen_states:
                continue
            out.append((_raw_score(base, scratch), action, scratch, key))
        return out

    def lookahead(action, scratch):
        """Best follow-up score near the action's column (setup-move detector).

        Plateau regions (adjacent under-compressed columns, deficits needing a
        two-move AddHA+ReplaceHA to synthesize a full adder) make every single
        action score-neutral; ranking detours by their best local follow-up
        lets the walk head into combos that pay off one step later.
        """
        trial = CompressorTree(n, scratch)
        near = {action.column - 1, action.column, action.column + 1}
        follow: list[LegalizeAction] = []
        dedupe = set()
        for violation in validate_ct(trial):
            if violation.column not in near:
                continue
            for f in candidate_actions(trial, violation):
                if f not in dedupe:
                    dedupe.add(f)
                    follow.append(f)
        best = None
        for f in follow:
            nxt = scratch.copy()
            for kind, delta in _ACTION_DELTAS[f.kind]:
                nxt[kind, f.column, f.stage] += delta
            if nxt.tobytes() in seen_states:
                continue
            score = _raw_score(base, nxt)
            if best is None or score < best:
                best = score
        return best if best is not None else _raw_score(base, scratch)

    def beam_rescue(width=8, depth=14):
        """Bounded beam search for a strictly better state (stall breaker).

        Rigid endgames need chains of score-neutral moves (open slack with a
        deletion, convert it, push surplus along a run of tight columns); the
        one-step greedy cannot see them, so on long stalls a deterministic
        beam over violation-local actions hunts for any strict improvement
        and the walk replays its action path.
        """
        beam = [(score_now, counts, [])]
        local_seen: set[bytes] = {counts.tobytes()}
        for _ in range(depth):
            expansions = []
            for score, state_counts, path in beam:
                state = CompressorTree(n, state_counts)
                occupancy = propagate_counts(state)
                columns = set()
                for violation in validate_ct(state)[:6]:
                    for dc in (-2, -1, 0, 1, 2):
                        columns.add(violation.column + dc)
                for kind in ACTION_KINDS:
                    for c in sorted(columns):
                        if not 0 <= c < state.columns:
                            continue
                        for s in range(state.stages):
                            action = LegalizeAction(kind, c, s)
                            if not action_applicable(state, action, occupancy):
                                continue
                            nxt = state_counts.copy()
                            for k2, delta in _ACTION_DELTAS[kind]:
                                nxt[k2, c, s] += delta
                            key = nxt.tobytes()
                            if key in seen_states or key in local_seen:
                                continue
                            local_seen.add(key)
                            sc = _raw_score(base, nxt)
                            entry = (sc, nxt, path + [action])
                            if sc < score_now:
                                return entry
                            expansions.append(entry)
            if not expansions:
                return None
            expansions.sort(key=lambda e: e[0])
            beam = expansions[:width]
        return None

    def widened_candidates(primary):
        """Primary candidates first (tie priority), then every other error's,
        then any applicable action anywhere."""
        ordered = list(primary)
        dedupe = set(primary)
        for violation in validate_ct(current):
            for action in candidate_actions(current, violation):
                if action not in dedupe:
                    dedupe.add(action)
                    ordered.append(action)
        occupancy = propagate_counts(current)
        for kind in ACTION_KINDS:
            for c in range(current.columns):
                for s in range(current.stages):
                    action = LegalizeAction(kind, c, s)
                    if action not in dedupe and action_applicable(
                        current, action, occupancy
                    ):
                        dedupe.add(action)
                        ordered.append(action)
        return ordered

    def pick(candidates):
        trials = trials_of(candidates)
        if trials:
            best = min(trials, key=lambda t: t[0])
            if best[0][0] < score_now[0]:
                return best
        else:
            # the enlisted actions are all spent: widen to every applicable
            # action before giving up
            trials = trials_of(widened_candidates(candidates))
            if not trials:
                return None
            best = min(trials, key=lambda t: t[0])
            if best[0][0] < score_now[0]:
                return best
        # detour: among the minimum-new-errors trials prefer the best local
        # rollout, then the fixed tie-break (preserved by the stable order)
        min_count = min(t[0][0] for t in trials)
        shortlist = [t for t in trials if t[0][0] == min_count][:16]
        ranked = min(
            enumerate(shortlist),
            key=lambda it: (lookahead(it[1][1], it[1][2]), it[1][0], it[0]),
        )
        return ranked[1]

    def resynthesize():
        """Sledgehammer: rebuild from the leftmost broken column outward."""
        first = _first_violation(current)
        for start in range(first.column, -1, -1):
            rebuilt = _resynthesize_suffix(n, current.counts, start)
            if rebuilt is not None:
                report.rebuilt_columns = list(range(start, current.columns))
                report.steps_taken += current.columns - start
                return CompressorTree(n, rebuilt)
        return None

    best_seen = score_now
    stall = 0
    while score_now[0]:
        if report.steps_taken >= max_steps - current.columns:
            # walk budget spent: one suffix rebuild, then give up honestly
            rebuilt = resynthesize()
            if rebuilt is not None and not validate_ct(rebuilt):
                current = rebuilt
                score_now = (0, 0)
                break
            report.final_violations = score_now[0]
            raise LegalizationError(
                f"step budget {max_steps} exhausted with "
                f"{score_now[0]} violations left",
                report,
            )
        if stall >= 60:
            # long plateau: hunt for a multi-move combo; failing that,
            # rebuild the broken suffix outright
            stall = 0
            rescued = beam_rescue()
            if rescued is not None:
                score, counts, path = rescued
                # replay the path so the tabu set and the trace stay exact
                state_counts = current.counts.copy()
                for action in path:
                    for kind, delta in _ACTION_DELTAS[action.kind]:
                        state_counts[kind, action.column, action.stage] += delta
                    seen_states.add(state_counts.tobytes())
                    report.trace.append(action)
                    report.steps_taken += 1
                    report.detours += 1
                counts = state_counts
                current = CompressorTree(n, counts)
                score_now = score
                best_seen = min(best_seen, score)
                continue
            rebuilt = resynthesize()
            if rebuilt is not None:
                current = rebuilt
                counts = current.counts.copy()
                score_now = violation_score(current)
                best_seen = min(best_seen, score_now)
                continue
        best = pick(candidate_actions(current, _first_violation(current)))
        if best is None:
            rebuilt = resynthesize()
            if rebuilt is not None:
                current = rebuilt
                counts = current.counts.copy()
                score_now = violation_score(current)
                continue
            report.final_violations = score_now[0]
            raise LegalizationError(
                f"no applicable action for any of {score_now[0]} violations",
                report,
            )
        score, action, counts, key = best
        current = CompressorTree(n, counts)
        seen_states.add(key)
        if score[0] >= score_now[0]:
            report.detours += 1
        report.trace.append(action)
        report.steps_taken += 1
        score_now = score
        if score < best_seen:
            best_seen = score
            stall = 0
        else:
            stall += 1
    report.final_violations = 0
    return current, report


def legalize_prefix(p: PrefixBitmap, force_outputs: bool = False) -> PrefixBitmap:
    """Fill missing lower parents until every present node has a valid split.

    The diagonal (inputs) is pinned first. Nodes are scanned by increasing
    row, then decreasing column; a node (i, j) without a valid split gets
    P[k-1, j] set for the smallest k with P[i, k] present (k = i always
    qualifies, so the fill always succeeds). Newly added nodes on earlier rows
    are repaired on a follow-up pass. With ``force_outputs`` the first column
    is pinned too, so the result can drive every carry of an adder.

    Only ever adds nodes; idempotent on already-valid bitmaps.
    """
    bits = p.bits.copy()
    for i in range(p.n):
        bits[i, i] = 1
    if force_outputs:
        bits[:, 0] = 1
    changed = True
    while changed:
        changed = False
        for i in range(p.n):
            for j in range(i - 1, -1, -1):
                if bits[i, j] and not _split_exists(bits, i, j):
                    for k in range(j + 1, i + 1):
                        if bits[i, k]:
                            bits[k - 1, j] = 1
                            changed = True
                            break
    return PrefixBitmap(p.n, bits)
