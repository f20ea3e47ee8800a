import numpy as np
import pytest
from hypothesis import given, strategies as st

from arithopt.drv import MISSING_LOWER_PARENT
from arithopt.prefix import (
    MissingParentError,
    PrefixBitmap,
    brent_kung_prefix,
    canonical_parents,
    kogge_stone_prefix,
    serial_prefix,
    sklansky_prefix,
    validate_prefix,
)

from helpers import brute_prefix_violations, random_bitmap


def test_serial_bitmap_is_valid():
    assert validate_prefix(serial_prefix(6)) == []


def test_dangling_node_is_flagged():
    p = PrefixBitmap.inputs_only(4).with_bit(3, 0, 1)
    flagged = {(v.column, v.stage) for v in validate_prefix(p)}
    assert flagged == {(3, 0)}


@pytest.mark.parametrize(
    "builder,count",
    [(sklansky_prefix, 12), (kogge_stone_prefix, 17), (brent_kung_prefix, 11), (serial_prefix, 7)],
)
def test_classic_networks_valid_with_known_node_counts(builder, count):
    p = builder(8)
    assert validate_prefix(p) == []
    assert p.node_count() == count
    assert p.has_all_outputs()


def test_all_zero_bitmap_flags_missing_inputs():
    p = PrefixBitmap(4, np.zeros((4, 4), dtype=np.uint8))
    flagged = {(v.column, v.stage) for v in validate_prefix(p)}
    assert flagged == {(i, i) for i in range(4)}
    assert all(v.kind == MISSING_LOWER_PARENT for v in validate_prefix(p))


def test_validator_agrees_with_brute_force_on_1000_random_bitmaps():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        bits = random_bitmap(rng)
        p = PrefixBitmap(bits.shape[0], bits)
        got = {(v.column, v.stage) for v in validate_prefix(p)}
        assert got == brute_prefix_violations(bits)


@given(st.integers(0, 2**32 - 1))
def test_validator_brute_force_property(seed):
    bits = random_bitmap(np.random.default_rng(seed))
    p = PrefixBitmap(bits.shape[0], bits)
    got = {(v.column, v.stage) for v in validate_prefix(p)}
    assert got == brute_prefix_violations(bits)


def test_canonical_parents_prefers_minimal_k():
    # node (5, 0) with both (5,5)/(4,0) and (5,4)/(3,0) available: minimal k wins
    p = PrefixBitmap.inputs_only(6)
    for i, j in [(5, 0), (4, 0), (3, 0), (5, 4)]:
        p = p.with_bit(i, j, 1)
    assert canonical_parents(p, 5, 0) == ((5, 4), (3, 0))


def test_canonical_parents_serial_chain():
    p = serial_prefix(5)
    for i in range(1, 5):
        assert canonical_parents(p, i, 0) == ((i, i), (i - 1, 0))


def test_canonical_parents_kogge_stone():
    assert canonical_parents(kogge_stone_prefix(8), 7, 0) == ((7, 4), (3, 0))


def test_canonical_parents_missing_raises():
    p = PrefixBitmap.inputs_only(4).with_bit(3, 0, 1)
    with pytest.raises(MissingParentError):
        canonical_parents(p, 3, 0)


def test_canonical_parents_rejects_absent_node():
    with pytest.raises(ValueError):
        canonical_parents(serial_prefix(4), 2, 1)


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_classic_networks_scale(n):
    for builder in (serial_prefix, sklansky_prefix, kogge_stone_prefix, brent_kung_prefix):
        p = builder(n)
        assert validate_prefix(p) == []
        assert p.has_all_outputs()
    assert kogge_stone_prefix(n).node_count() == n * int(np.log2(n)) - n + 1
