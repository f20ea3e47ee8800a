import numpy as np
import pytest
from hypothesis import given, strategies as st

from arithopt.ct import (
    FULL_ADDER,
    HALF_ADDER,
    CompressorTree,
    propagate_counts,
    validate_ct,
    wallace_tree,
)
from arithopt.drv import OVER_COMPRESSION, UNDER_COMPRESSION, DesignRuleViolation
from arithopt.legalize import (
    InapplicableActionError,
    LegalizationError,
    LegalizeAction,
    apply_action,
    candidate_actions,
    legalize_ct,
    legalize_prefix,
)
from arithopt.prefix import PrefixBitmap, serial_prefix, sklansky_prefix, validate_prefix

from helpers import random_bitmap


def test_replace_pair_is_inverse():
    tree = wallace_tree(8)
    spot = np.argwhere(tree.counts[FULL_ADDER] > 0)[0]
    c, s = int(spot[0]), int(spot[1])
    once = apply_action(tree, LegalizeAction("ReplaceFA", c, s))
    back = apply_action(once, LegalizeAction("ReplaceHA", c, s))
    assert back == tree


def test_add_ha_shifts_occupancy():
    tree = wallace_tree(4)
    v_before = propagate_counts(tree)
    spots = [
        (c, s)
        for c in range(tree.columns)
        for s in range(tree.stages)
        if v_before[c, s] - 3 * tree.counts[0, c, s] - 2 * tree.counts[1, c, s] >= 2
    ]
    c, s = spots[0]
    v_after = propagate_counts(apply_action(tree, LegalizeAction("AddHA", c, s)))
    assert v_after[c, s + 1] == v_before[c, s + 1] - 1
    assert v_after[c + 1, s + 1] == v_before[c + 1, s + 1] + 1


def test_split_fa_feeds_next_column_only():
    tree = wallace_tree(8)
    v = propagate_counts(tree)
    spot = next(
        (int(c), int(s))
        for c, s in np.argwhere(tree.counts[FULL_ADDER] > 0)
        if v[c, s] - 3 * tree.counts[0, c, s] - 2 * tree.counts[1, c, s] >= 1
    )
    c, s = spot
    v2 = propagate_counts(apply_action(tree, LegalizeAction("SplitFA", c, s)))
    # in-column occupancy unchanged at every later stage; next column gains one
    assert (v2[c, s + 1 :] == v[c, s + 1 :]).all()
    assert (v2[c + 1, s + 1 :] == v[c + 1, s + 1 :] + 1).all()


def test_apply_action_rejects_failed_precondition():
    tree = CompressorTree.empty(4)
    with pytest.raises(InapplicableActionError):
        apply_action(tree, LegalizeAction("DeleteHA", 1, 0))
    with pytest.raises(InapplicableActionError):
        apply_action(tree, LegalizeAction("AddHA", 0, 0))  # one spare bit only


def test_under_compression_at_small_columns_has_no_fuse_branch():
    tree = CompressorTree.empty(4)
    for column in (0, 1):
        violation = DesignRuleViolation(UNDER_COMPRESSION, column, tree.stages, 1)
        kinds = {a.kind for a in candidate_actions(tree, violation)}
        assert "FuseFA" not in kinds
        assert kinds <= {"ReplaceHA", "AddHA"}


def test_over_compression_at_first_stage_has_no_split_candidates():
    tree = CompressorTree.empty(4).with_deltas([(FULL_ADDER, 2, 0, +2)])
    violation = next(v for v in validate_ct(tree) if v.kind == OVER_COMPRESSION)
    assert violation.stage == 0
    kinds = {a.kind for a in candidate_actions(tree, violation)}
    assert "SplitFA" not in kinds  # empty range s' < 0


def test_add_ha_candidates_respect_spare_bits():
    tree = CompressorTree.empty(4)
    violation = DesignRuleViolation(UNDER_COMPRESSION, 3, tree.stages, 2)
    v = propagate_counts(tree)
    cands = candidate_actions(tree, violation)
    adds = [a for a in cands if a.kind == "AddHA"]
    consumed = 3 * tree.counts[0] + 2 * tree.counts[1]
    expected = [s for s in range(tree.stages) if v[3, s] - consumed[3, s] >= 2]
    assert sorted(a.stage for a in adds) == expected


def test_legal_tree_is_fixpoint():
    tree = wallace_tree(8)
    fixed, report = legalize_ct(tree)
    assert fixed == tree
    assert report.steps_taken == 0 and report.final_violations == 0


def test_single_deleted_fa_repairs_quickly():
    tree = wallace_tree(8)
    c, s = 6, 1
    assert tree.counts[FULL_ADDER, c, s] > 0
    broken = tree.with_deltas([(FULL_ADDER, c, s, -1)])
    fixed, report = legalize_ct(broken)
    assert validate_ct(fixed) == []
    assert report.steps_taken <= 10


@given(st.integers(0, 2**32 - 1))
def test_single_injected_fault_repairs_within_50_steps(seed):
    rng = np.random.default_rng(seed)
    tree = wallace_tree(int(rng.choice([4, 8])))
    spots = np.argwhere(tree.counts.sum(axis=0) > 0)
    c, s = spots[rng.integers(len(spots))]
    k = FULL_ADDER if tree.counts[FULL_ADDER, c, s] > 0 else HALF_ADDER
    broken = tree.with_deltas([(k, int(c), int(s), -1)])
    try:
        fixed, report = legalize_ct(broken)
    except LegalizationError as err:  # a detour cycle counts as failure here
        pytest.fail(f"single-fault repair failed: {err}")
    assert validate_ct(fixed) == []
    assert report.steps_taken <= 50


def test_legalize_ct_is_deterministic():
    tree = wallace_tree(8).with_deltas([(FULL_ADDER, 6, 1, -1), (HALF_ADDER, 4, 2, +1)])
    runs = [legalize_ct(tree) for _ in range(3)]
    assert all(r[0] == runs[0][0] for r in runs)
    assert all(r[1].trace == runs[0][1].trace for r in runs)


def test_legalize_ct_step_budget_raises_with_report():
    tree = CompressorTree.empty(8)  # ten under-compressed columns
    with pytest.raises(LegalizationError) as exc:
        legalize_ct(tree, max_steps=1)
    assert exc.value.report.final_violations > 0


def test_legalize_prefix_fixpoint():
    p = sklansky_prefix(8)
    assert legalize_prefix(p) == p


def test_legalize_prefix_fills_parent_chain():
    p = PrefixBitmap.inputs_only(4).with_bit(3, 0, 1)
    fixed = legalize_prefix(p)
    assert validate_prefix(fixed) == []
    assert fixed.bits[2, 0] == 1 and fixed.bits[1, 0] == 1


def test_legalize_prefix_1000_random_bitmaps():
    rng = np.random.default_rng(12345)
    for _ in range(1000):
        bits = random_bitmap(rng, 8)
        fixed = legalize_prefix(PrefixBitmap(8, bits))
        assert validate_prefix(fixed) == []


@given(st.integers(0, 2**32 - 1))
def test_legalize_prefix_idempotent_and_monotone(seed):
    bits = random_bitmap(np.random.default_rng(seed))
    p = PrefixBitmap(bits.shape[0], bits)
    once = legalize_prefix(p)
    assert legalize_prefix(once) == once
    assert (once.bits >= np.tril(p.bits)).all()  # only ever adds nodes
    assert once.bits.sum() >= np.tril(p.bits).sum()


def test_legalize_prefix_force_outputs():
    p = PrefixBitmap.inputs_only(6)
    fixed = legalize_prefix(p, force_outputs=True)
    assert fixed.has_all_outputs()
    assert validate_prefix(fixed) == []


def test_removed_serial_output_is_reinserted():
    p = serial_prefix(5).with_bit(3, 0, 0)
    fixed = legalize_prefix(p)
    assert fixed.bits[3, 0] == 1  # the node above still needs it
    assert validate_prefix(fixed) == []
